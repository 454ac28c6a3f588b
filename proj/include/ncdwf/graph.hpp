#pragma once

#include <deque>
#include <string>

#include "ncdwf/tensor.hpp"

namespace ncdwf {

// A named weight or bias with its gradient accumulator. Lives in the model
// structs; tapes bind to it by reference and add into grad on backward.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.zero(); }
};

namespace graph {

struct Node {
  int id = -1;
};

// Define-by-run reverse-mode tape. Build one per forward/backward pair:
// values are computed eagerly as nodes are created (with a finiteness check
// on every result), backward() sweeps the records in reverse creation order,
// which is already topological, and accumulates gradients additively.
class Tape {
 public:
  explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. input() is a constant; var() is a differentiable input whose
  // gradient is read back with grad(); param() accumulates into p.grad.
  Node input(Tensor v);
  Node var(Tensor v);
  Node param(Parameter& p);

  // x[B×I] · W[O×I]^T + b[1×O] broadcast over rows -> [B×O]
  Node affine(Node x, Node W, Node b);
  Node relu(Node x);
  Node softmax_rows(Node x);
  Node log(Node x);
  Node exp(Node x);
  Node sqrt(Node x);  // subgradient 0 at x == 0
  Node square(Node x);
  Node sigmoid(Node x);
  Node clamp_min(Node x, double lo);  // gradient passes only where x > lo
  Node scale(Node x, double a);
  // add/sub/mul take same-shape operands, or a 1×C second operand broadcast
  // over the rows of a B×C first operand.
  Node add(Node a, Node b);
  Node sub(Node a, Node b);
  Node mul(Node a, Node b);
  Node sum(Node x);                  // -> 1×1
  Node row_sum(Node x);              // B×C -> B×1
  Node mean_all(Node x);             // sum / element count -> 1×1
  Node concat_rows(Node a, Node b);  // stack vertically, equal column counts

  // References stay valid until the tape is destroyed, even as later nodes
  // are created. grad() is meaningful only after backward().
  const Tensor& val(Node n) const;
  const Tensor& grad(Node n) const;
  double scalar_value(Node n) const;

  // Seeds d(root)/d(root) = 1 and accumulates gradients for every
  // differentiable leaf. root must be 1×1. Callable once per tape.
  void backward(Node root);

  std::size_t node_count() const { return recs_.size(); }

 private:
  enum class Op {
    kLeaf, kAffine, kRelu, kSoftmaxRows, kLog, kExp, kSqrt, kSquare, kSigmoid,
    kClampMin, kScale, kAdd, kSub, kMul, kSum, kRowSum, kConcatRows,
  };

  struct Rec {
    Op op = Op::kLeaf;
    int a = -1, b = -1, c = -1;
    double k = 0.0;            // scale factor or clamp threshold
    bool needs_grad = false;
    bool broadcast_b = false;  // add/sub/mul with 1×C second operand
    Tensor val;
    Tensor grad;
    Tensor* ext_val = nullptr;   // param leaves alias external storage
    Tensor* ext_grad = nullptr;
  };

  const Tensor& value_of(int id) const {
    const Rec& r = recs_[id];
    return r.ext_val ? *r.ext_val : r.val;
  }
  Node push(Rec rec, const char* opname);
  void check_same_or_broadcast(const Tensor& a, const Tensor& b, bool& bcast,
                               const char* opname) const;

  // deque keeps element references stable across push, so val()/grad()
  // results may be held while further nodes are added.
  std::deque<Rec> recs_;
  bool check_finite_;
  bool backward_done_ = false;
};

}  // namespace graph
}  // namespace ncdwf
