#include "ncdwf/graph.hpp"

#include <cmath>
#include <cstring>
#include <string>

namespace ncdwf::graph {

namespace k = ncdwf::kernels;

Node Tape::push(Rec rec, const char* opname) {
  const Tensor& v = rec.ext_val ? *rec.ext_val : rec.val;
  if (v.empty()) throw ShapeError(std::string(opname) + ": empty tensor");
  if (check_finite_ && !v.all_finite())
    throw NumericError(std::string(opname) + ": non-finite values");
  recs_.push_back(std::move(rec));
  return Node{static_cast<int>(recs_.size()) - 1};
}

Node Tape::input(Tensor v) {
  Rec r;
  r.val = std::move(v);
  return push(std::move(r), "input");
}

Node Tape::var(Tensor v) {
  Rec r;
  r.val = std::move(v);
  r.needs_grad = true;
  return push(std::move(r), "var");
}

Node Tape::param(Parameter& p) {
  Rec r;
  r.needs_grad = true;
  r.ext_val = &p.value;
  r.ext_grad = &p.grad;
  return push(std::move(r), "param");
}

namespace {
bool valid(const Node n) { return n.id >= 0; }
}  // namespace

#define NCDWF_CHECK_NODE(n, op)                                      \
  do {                                                               \
    if (!valid(n) || static_cast<std::size_t>(n.id) >= recs_.size()) \
      throw Error(op ": node does not belong to this tape");         \
  } while (0)

Node Tape::affine(Node x, Node W, Node b) {
  NCDWF_CHECK_NODE(x, "affine");
  NCDWF_CHECK_NODE(W, "affine");
  NCDWF_CHECK_NODE(b, "affine");
  const Tensor& xv = value_of(x.id);
  const Tensor& wv = value_of(W.id);
  const Tensor& bv = value_of(b.id);
  if (wv.cols() != xv.cols())
    throw ShapeError("affine: weight in-dim " + std::to_string(wv.cols()) +
                     " vs input dim " + std::to_string(xv.cols()));
  if (bv.rows() != 1 || bv.cols() != wv.rows())
    throw ShapeError("affine: bias must be 1 x out-dim");
  Rec r;
  r.op = Op::kAffine;
  r.a = x.id;
  r.b = W.id;
  r.c = b.id;
  r.needs_grad = recs_[x.id].needs_grad || recs_[W.id].needs_grad || recs_[b.id].needs_grad;
  r.val = Tensor(xv.rows(), wv.rows());
  for (std::size_t i = 0; i < r.val.rows(); ++i)
    std::memcpy(r.val.row_ptr(i), bv.data(), bv.cols() * sizeof(double));
  k::matmul_nt(xv.data(), wv.data(), r.val.data(), xv.rows(), xv.cols(), wv.rows(),
               /*acc=*/true);
  return push(std::move(r), "affine");
}

namespace {
Tensor elementwise_shell(const Tensor& x) { return Tensor(x.rows(), x.cols()); }
}  // namespace

Node Tape::relu(Node x) {
  NCDWF_CHECK_NODE(x, "relu");
  const Tensor& xv = value_of(x.id);
  Rec r;
  r.op = Op::kRelu;
  r.a = x.id;
  r.needs_grad = recs_[x.id].needs_grad;
  r.val = elementwise_shell(xv);
  k::active().relu(xv.data(), r.val.data(), xv.size());
  return push(std::move(r), "relu");
}

Node Tape::softmax_rows(Node x) {
  NCDWF_CHECK_NODE(x, "softmax_rows");
  const Tensor& xv = value_of(x.id);
  Rec r;
  r.op = Op::kSoftmaxRows;
  r.a = x.id;
  r.needs_grad = recs_[x.id].needs_grad;
  r.val = elementwise_shell(xv);
  const std::size_t C = xv.cols();
  std::vector<double> shifted(C);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    const double* row = xv.row_ptr(i);
    const double m = k::active().max(row, C);
    for (std::size_t j = 0; j < C; ++j) shifted[j] = row[j] - m;
    double* out = r.val.row_ptr(i);
    k::exp_vec(shifted.data(), out, C);
    const double s = k::active().sum(out, C);
    k::active().scal(1.0 / s, out, out, C);
  }
  return push(std::move(r), "softmax_rows");
}

Node Tape::log(Node x) {
  NCDWF_CHECK_NODE(x, "log");
  const Tensor& xv = value_of(x.id);
  Rec r;
  r.op = Op::kLog;
  r.a = x.id;
  r.needs_grad = recs_[x.id].needs_grad;
  r.val = elementwise_shell(xv);
  k::log_vec(xv.data(), r.val.data(), xv.size());
  return push(std::move(r), "log");
}

Node Tape::exp(Node x) {
  NCDWF_CHECK_NODE(x, "exp");
  const Tensor& xv = value_of(x.id);
  Rec r;
  r.op = Op::kExp;
  r.a = x.id;
  r.needs_grad = recs_[x.id].needs_grad;
  r.val = elementwise_shell(xv);
  k::exp_vec(xv.data(), r.val.data(), xv.size());
  return push(std::move(r), "exp");
}

Node Tape::sqrt(Node x) {
  NCDWF_CHECK_NODE(x, "sqrt");
  const Tensor& xv = value_of(x.id);
  Rec r;
  r.op = Op::kSqrt;
  r.a = x.id;
  r.needs_grad = recs_[x.id].needs_grad;
  r.val = elementwise_shell(xv);
  k::sqrt_vec(xv.data(), r.val.data(), xv.size());
  return push(std::move(r), "sqrt");
}

Node Tape::square(Node x) {
  NCDWF_CHECK_NODE(x, "square");
  const Tensor& xv = value_of(x.id);
  Rec r;
  r.op = Op::kSquare;
  r.a = x.id;
  r.needs_grad = recs_[x.id].needs_grad;
  r.val = elementwise_shell(xv);
  k::active().square(xv.data(), r.val.data(), xv.size());
  return push(std::move(r), "square");
}

Node Tape::sigmoid(Node x) {
  NCDWF_CHECK_NODE(x, "sigmoid");
  const Tensor& xv = value_of(x.id);
  Rec r;
  r.op = Op::kSigmoid;
  r.a = x.id;
  r.needs_grad = recs_[x.id].needs_grad;
  r.val = elementwise_shell(xv);
  k::sigmoid_vec(xv.data(), r.val.data(), xv.size());
  return push(std::move(r), "sigmoid");
}

Node Tape::clamp_min(Node x, double lo) {
  NCDWF_CHECK_NODE(x, "clamp_min");
  const Tensor& xv = value_of(x.id);
  Rec r;
  r.op = Op::kClampMin;
  r.a = x.id;
  r.k = lo;
  r.needs_grad = recs_[x.id].needs_grad;
  r.val = elementwise_shell(xv);
  for (std::size_t i = 0; i < xv.size(); ++i)
    r.val.data()[i] = xv.data()[i] > lo ? xv.data()[i] : lo;
  return push(std::move(r), "clamp_min");
}

Node Tape::scale(Node x, double a) {
  NCDWF_CHECK_NODE(x, "scale");
  const Tensor& xv = value_of(x.id);
  Rec r;
  r.op = Op::kScale;
  r.a = x.id;
  r.k = a;
  r.needs_grad = recs_[x.id].needs_grad;
  r.val = elementwise_shell(xv);
  k::active().scal(a, xv.data(), r.val.data(), xv.size());
  return push(std::move(r), "scale");
}

void Tape::check_same_or_broadcast(const Tensor& a, const Tensor& b, bool& bcast,
                                   const char* opname) const {
  if (a.same_shape(b)) {
    bcast = false;
  } else if (b.rows() == 1 && b.cols() == a.cols()) {
    bcast = true;
  } else {
    throw ShapeError(std::string(opname) + ": shapes " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

Node Tape::add(Node a, Node b) {
  NCDWF_CHECK_NODE(a, "add");
  NCDWF_CHECK_NODE(b, "add");
  const Tensor& av = value_of(a.id);
  const Tensor& bv = value_of(b.id);
  Rec r;
  r.op = Op::kAdd;
  r.a = a.id;
  r.b = b.id;
  check_same_or_broadcast(av, bv, r.broadcast_b, "add");
  r.needs_grad = recs_[a.id].needs_grad || recs_[b.id].needs_grad;
  r.val = elementwise_shell(av);
  if (r.broadcast_b) {
    for (std::size_t i = 0; i < av.rows(); ++i)
      k::active().add(av.row_ptr(i), bv.data(), r.val.row_ptr(i), av.cols());
  } else {
    k::active().add(av.data(), bv.data(), r.val.data(), av.size());
  }
  return push(std::move(r), "add");
}

Node Tape::sub(Node a, Node b) {
  NCDWF_CHECK_NODE(a, "sub");
  NCDWF_CHECK_NODE(b, "sub");
  const Tensor& av = value_of(a.id);
  const Tensor& bv = value_of(b.id);
  Rec r;
  r.op = Op::kSub;
  r.a = a.id;
  r.b = b.id;
  check_same_or_broadcast(av, bv, r.broadcast_b, "sub");
  r.needs_grad = recs_[a.id].needs_grad || recs_[b.id].needs_grad;
  r.val = elementwise_shell(av);
  if (r.broadcast_b) {
    for (std::size_t i = 0; i < av.rows(); ++i)
      k::active().sub(av.row_ptr(i), bv.data(), r.val.row_ptr(i), av.cols());
  } else {
    k::active().sub(av.data(), bv.data(), r.val.data(), av.size());
  }
  return push(std::move(r), "sub");
}

Node Tape::mul(Node a, Node b) {
  NCDWF_CHECK_NODE(a, "mul");
  NCDWF_CHECK_NODE(b, "mul");
  const Tensor& av = value_of(a.id);
  const Tensor& bv = value_of(b.id);
  Rec r;
  r.op = Op::kMul;
  r.a = a.id;
  r.b = b.id;
  check_same_or_broadcast(av, bv, r.broadcast_b, "mul");
  r.needs_grad = recs_[a.id].needs_grad || recs_[b.id].needs_grad;
  r.val = elementwise_shell(av);
  if (r.broadcast_b) {
    for (std::size_t i = 0; i < av.rows(); ++i)
      k::active().mul(av.row_ptr(i), bv.data(), r.val.row_ptr(i), av.cols());
  } else {
    k::active().mul(av.data(), bv.data(), r.val.data(), av.size());
  }
  return push(std::move(r), "mul");
}

Node Tape::sum(Node x) {
  NCDWF_CHECK_NODE(x, "sum");
  const Tensor& xv = value_of(x.id);
  Rec r;
  r.op = Op::kSum;
  r.a = x.id;
  r.needs_grad = recs_[x.id].needs_grad;
  r.val = Tensor(1, 1, k::active().sum(xv.data(), xv.size()));
  return push(std::move(r), "sum");
}

Node Tape::row_sum(Node x) {
  NCDWF_CHECK_NODE(x, "row_sum");
  const Tensor& xv = value_of(x.id);
  Rec r;
  r.op = Op::kRowSum;
  r.a = x.id;
  r.needs_grad = recs_[x.id].needs_grad;
  r.val = Tensor(xv.rows(), 1);
  for (std::size_t i = 0; i < xv.rows(); ++i)
    r.val(i, 0) = k::active().sum(xv.row_ptr(i), xv.cols());
  return push(std::move(r), "row_sum");
}

Node Tape::mean_all(Node x) {
  NCDWF_CHECK_NODE(x, "mean_all");
  const std::size_t n = value_of(x.id).size();
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Node Tape::concat_rows(Node a, Node b) {
  NCDWF_CHECK_NODE(a, "concat_rows");
  NCDWF_CHECK_NODE(b, "concat_rows");
  const Tensor& av = value_of(a.id);
  const Tensor& bv = value_of(b.id);
  if (av.cols() != bv.cols()) throw ShapeError("concat_rows: column counts differ");
  Rec r;
  r.op = Op::kConcatRows;
  r.a = a.id;
  r.b = b.id;
  r.needs_grad = recs_[a.id].needs_grad || recs_[b.id].needs_grad;
  r.val = Tensor(av.rows() + bv.rows(), av.cols());
  std::memcpy(r.val.data(), av.data(), av.size() * sizeof(double));
  std::memcpy(r.val.data() + av.size(), bv.data(), bv.size() * sizeof(double));
  return push(std::move(r), "concat_rows");
}

const Tensor& Tape::val(Node n) const {
  NCDWF_CHECK_NODE(n, "val");
  return value_of(n.id);
}

const Tensor& Tape::grad(Node n) const {
  NCDWF_CHECK_NODE(n, "grad");
  if (!backward_done_) throw Error("grad: backward has not run on this tape");
  return recs_[n.id].grad;
}

double Tape::scalar_value(Node n) const {
  const Tensor& v = val(n);
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("scalar_value: tensor is not 1x1");
  return v(0, 0);
}

void Tape::backward(Node root) {
  NCDWF_CHECK_NODE(root, "backward");
  if (backward_done_) throw Error("backward: already run on this tape");
  {
    const Tensor& rv = value_of(root.id);
    if (rv.rows() != 1 || rv.cols() != 1)
      throw ShapeError("backward: root must be a 1x1 scalar");
  }
  backward_done_ = true;

  for (Rec& r : recs_) {
    const Tensor& v = r.ext_val ? *r.ext_val : r.val;
    r.grad = Tensor(v.rows(), v.cols());
  }
  recs_[root.id].grad(0, 0) = 1.0;

  const k::Ops& o = k::active();
  std::vector<double> tmp;

  for (int id = root.id; id >= 0; --id) {
    Rec& r = recs_[id];
    if (!r.needs_grad) continue;
    const Tensor& gy = r.grad;
    switch (r.op) {
      case Op::kLeaf:
        break;
      case Op::kAffine: {
        Rec& rx = recs_[r.a];
        Rec& rw = recs_[r.b];
        Rec& rb = recs_[r.c];
        const Tensor& xv = value_of(r.a);
        const Tensor& wv = value_of(r.b);
        const std::size_t B = xv.rows(), I = xv.cols(), O = wv.rows();
        if (rx.needs_grad)
          k::matmul_nn(gy.data(), wv.data(), rx.grad.data(), B, O, I, /*acc=*/true);
        if (rw.needs_grad)
          k::matmul_tn(gy.data(), xv.data(), rw.grad.data(), O, B, I, /*acc=*/true);
        if (rb.needs_grad)
          for (std::size_t i = 0; i < B; ++i)
            o.axpy(1.0, gy.row_ptr(i), rb.grad.data(), O);
        break;
      }
      case Op::kRelu: {
        Rec& rx = recs_[r.a];
        if (rx.needs_grad) {
          const Tensor& xv = value_of(r.a);
          o.relu_bwd(xv.data(), gy.data(), rx.grad.data(), xv.size());
        }
        break;
      }
      case Op::kSoftmaxRows: {
        Rec& rx = recs_[r.a];
        if (rx.needs_grad) {
          const Tensor& p = r.val;
          const std::size_t C = p.cols();
          for (std::size_t i = 0; i < p.rows(); ++i) {
            const double* prow = p.row_ptr(i);
            const double* grow = gy.row_ptr(i);
            double* gx = rx.grad.row_ptr(i);
            const double d = o.dot(grow, prow, C);
            o.fmadd(prow, grow, gx, C);
            o.axpy(-d, prow, gx, C);
          }
        }
        break;
      }
      case Op::kLog: {
        Rec& rx = recs_[r.a];
        if (rx.needs_grad) {
          const Tensor& xv = value_of(r.a);
          tmp.resize(xv.size());
          k::div(gy.data(), xv.data(), tmp.data(), xv.size());
          o.axpy(1.0, tmp.data(), rx.grad.data(), xv.size());
        }
        break;
      }
      case Op::kExp: {
        Rec& rx = recs_[r.a];
        if (rx.needs_grad) o.fmadd(gy.data(), r.val.data(), rx.grad.data(), r.val.size());
        break;
      }
      case Op::kSqrt: {
        Rec& rx = recs_[r.a];
        if (rx.needs_grad) {
          double* gx = rx.grad.data();
          const double* y = r.val.data();
          const double* g = gy.data();
          for (std::size_t i = 0; i < r.val.size(); ++i)
            if (y[i] > 0.0) gx[i] += g[i] / (2.0 * y[i]);
        }
        break;
      }
      case Op::kSquare: {
        Rec& rx = recs_[r.a];
        if (rx.needs_grad) {
          const Tensor& xv = value_of(r.a);
          tmp.resize(xv.size());
          o.mul(gy.data(), xv.data(), tmp.data(), xv.size());
          o.axpy(2.0, tmp.data(), rx.grad.data(), xv.size());
        }
        break;
      }
      case Op::kSigmoid: {
        Rec& rx = recs_[r.a];
        if (rx.needs_grad) {
          double* gx = rx.grad.data();
          const double* y = r.val.data();
          const double* g = gy.data();
          for (std::size_t i = 0; i < r.val.size(); ++i)
            gx[i] += g[i] * y[i] * (1.0 - y[i]);
        }
        break;
      }
      case Op::kClampMin: {
        Rec& rx = recs_[r.a];
        if (rx.needs_grad) {
          const Tensor& xv = value_of(r.a);
          double* gx = rx.grad.data();
          const double* g = gy.data();
          for (std::size_t i = 0; i < xv.size(); ++i)
            if (xv.data()[i] > r.k) gx[i] += g[i];
        }
        break;
      }
      case Op::kScale: {
        Rec& rx = recs_[r.a];
        if (rx.needs_grad) o.axpy(r.k, gy.data(), rx.grad.data(), gy.size());
        break;
      }
      case Op::kAdd:
      case Op::kSub: {
        Rec& ra = recs_[r.a];
        Rec& rb = recs_[r.b];
        const double sb = r.op == Op::kSub ? -1.0 : 1.0;
        if (ra.needs_grad) o.axpy(1.0, gy.data(), ra.grad.data(), gy.size());
        if (rb.needs_grad) {
          if (r.broadcast_b) {
            for (std::size_t i = 0; i < gy.rows(); ++i)
              o.axpy(sb, gy.row_ptr(i), rb.grad.data(), gy.cols());
          } else {
            o.axpy(sb, gy.data(), rb.grad.data(), gy.size());
          }
        }
        break;
      }
      case Op::kMul: {
        Rec& ra = recs_[r.a];
        Rec& rb = recs_[r.b];
        const Tensor& av = value_of(r.a);
        const Tensor& bv = value_of(r.b);
        if (r.broadcast_b) {
          if (ra.needs_grad)
            for (std::size_t i = 0; i < gy.rows(); ++i)
              o.fmadd(gy.row_ptr(i), bv.data(), ra.grad.row_ptr(i), gy.cols());
          if (rb.needs_grad) {
            tmp.resize(gy.cols());
            for (std::size_t i = 0; i < gy.rows(); ++i) {
              o.mul(gy.row_ptr(i), av.row_ptr(i), tmp.data(), gy.cols());
              o.axpy(1.0, tmp.data(), rb.grad.data(), gy.cols());
            }
          }
        } else {
          if (ra.needs_grad) o.fmadd(gy.data(), bv.data(), ra.grad.data(), gy.size());
          if (rb.needs_grad) o.fmadd(gy.data(), av.data(), rb.grad.data(), gy.size());
        }
        break;
      }
      case Op::kSum: {
        Rec& rx = recs_[r.a];
        if (rx.needs_grad) {
          const double g = gy(0, 0);
          double* gx = rx.grad.data();
          for (std::size_t i = 0; i < rx.grad.size(); ++i) gx[i] += g;
        }
        break;
      }
      case Op::kRowSum: {
        Rec& rx = recs_[r.a];
        if (rx.needs_grad) {
          for (std::size_t i = 0; i < rx.grad.rows(); ++i) {
            const double g = gy(i, 0);
            double* gx = rx.grad.row_ptr(i);
            for (std::size_t j = 0; j < rx.grad.cols(); ++j) gx[j] += g;
          }
        }
        break;
      }
      case Op::kConcatRows: {
        Rec& ra = recs_[r.a];
        Rec& rb = recs_[r.b];
        const std::size_t na = ra.grad.size();
        if (ra.needs_grad) o.axpy(1.0, gy.data(), ra.grad.data(), na);
        if (rb.needs_grad) o.axpy(1.0, gy.data() + na, rb.grad.data(), rb.grad.size());
        break;
      }
    }
  }

  // hand accumulated leaf gradients to their owning Parameters
  for (Rec& r : recs_)
    if (r.ext_grad) o.axpy(1.0, r.grad.data(), r.ext_grad->data(), r.grad.size());
}

#undef NCDWF_CHECK_NODE

}  // namespace ncdwf::graph
