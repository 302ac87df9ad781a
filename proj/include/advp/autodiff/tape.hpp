#pragma once

// Define-by-run reverse-mode differentiation over NArray values.
//
// A Tape records every operation of one forward pass in creation order, which
// is a topological order of the graph. backward() walks it in reverse. Build a
// fresh tape per forward pass; tapes are not thread-safe but independent tapes
// can live on different threads.

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "advp/autodiff/narray.hpp"

namespace advp {

/// A named trainable array. Freezing is a flag: a frozen parameter still
/// participates in the forward pass and passes gradients through to its
/// inputs, but its own gradient is exactly zero.
struct Parameter {
  std::string name;
  NArray value;
  bool trainable = true;
};

/// Gradients keyed by parameter name (ordered, so iteration is deterministic).
using GradientMap = std::map<std::string, NArray>;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  const NArray& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

enum class Op : std::uint8_t {
  constant,
  parameter,
  matmul,
  add,
  add_row,  // (r, c) + (c)
  sub,
  mul,
  scale,
  relu,
  tanh,
  exp,
  square,
  log_softmax,
  gather,
  sum,
  mean,
  sum_axis,
  clip,
  minimum,
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Non-differentiable input. Rejects non-finite values.
  Var constant(NArray value);

  /// Parameter leaf. The tape references p.value without copying, so p must
  /// outlive the tape and stay unchanged until backward() returns. With
  /// frozen=true this use of p is treated as non-trainable regardless of
  /// p.trainable.
  Var param(const Parameter& p, bool frozen = false);

  /// Reverse pass from a scalar loss. Every parameter reachable from the loss
  /// appears exactly once; non-trainable ones map to an all-zero array.
  GradientMap backward(Var loss);

  const NArray& value(std::uint32_t id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  friend Var matmul(Var, Var);
  friend Var add(Var, Var);
  friend Var sub(Var, Var);
  friend Var mul(Var, Var);
  friend Var scale(Var, double);
  friend Var relu(Var);
  friend Var tanh(Var);
  friend Var exp(Var);
  friend Var square(Var);
  friend Var log_softmax(Var, std::size_t);
  friend Var gather(Var, const std::vector<std::size_t>&);
  friend Var sum(Var);
  friend Var mean(Var);
  friend Var sum(Var, std::size_t);
  friend Var clip(Var, double, double);
  friend Var minimum(Var, Var);

  struct Node {
    Op op = Op::constant;
    std::array<std::uint32_t, 2> in{};
    std::uint8_t n_in = 0;
    bool requires_grad = false;
    std::size_t axis = 0;
    double s0 = 0.0;
    double s1 = 0.0;
    NArray value;
    const NArray* external = nullptr;  // parameter storage
    const Parameter* param = nullptr;
    std::vector<std::size_t> indices;
  };

  Var push(Node node, const char* op_name);
  const NArray& node_value(const Node& n) const { return n.external ? *n.external : n.value; }
  void propagate(std::uint32_t id, std::vector<NArray>& grads);

  std::deque<Node> nodes_;  // references into values stay valid across push_back
};

// Forward operations. Each rejects incompatible shapes (naming both) and
// non-finite results.
Var matmul(Var a, Var b);
/// Elementwise; also accepts a (rows, cols) + (cols) row broadcast.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var x);
Var tanh(Var x);
Var exp(Var x);
Var square(Var x);
/// Max-subtracted log-softmax along `axis`.
Var log_softmax(Var x, std::size_t axis);
/// Picks x[r, indices[r]] from a (rows, cols) array.
Var gather(Var x, const std::vector<std::size_t>& indices);
Var sum(Var x);
Var mean(Var x);
/// Reduces a rank-2 array along `axis`.
Var sum(Var x, std::size_t axis);
/// Requires lo <= hi. Gradient passes where lo <= x <= hi.
Var clip(Var x, double lo, double hi);
/// Elementwise minimum; ties route the gradient to `a`.
Var minimum(Var a, Var b);

}  // namespace advp
