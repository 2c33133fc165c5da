#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every primitive op applied to Vars together with a closure
// that pushes the output adjoint back onto the inputs. Values are computed
// eagerly; when the tape is not recording (or none of an op's inputs needs a
// gradient) the closure is dropped, so the same code path serves plain
// forward evaluation.

#include <Eigen/Dense>

#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace sdrom::ad {

using Mat = Eigen::MatrixXd;

class Tape;

class Var {
 public:
  Var() = default;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Mat value);
  Var variable(Mat value);

  // Propagates adjoints from a 1x1 output back to every reachable variable.
  void backward(const Var& output);

  // Adjoint of v after backward(); a zero matrix when v was not reached.
  Mat grad(const Var& v) const;

  // Op-author interface.
  Var push(Mat value, std::initializer_list<Var> parents, Backward back);
  Var push(Mat value, std::span<const Var> parents, Backward back);
  const Mat& value(int id) const { return nodes_[id].value; }
  const Mat& adjoint(int id) const { return nodes_[id].adj; }
  Mat& accum(int id);
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat adj;
    Backward back;
    bool needs_grad = false;
    bool has_adj = false;
  };

  std::vector<Node> nodes_;
  bool record_;
};

inline const Mat& Var::value() const { return tape_->value(id_); }

// Elementwise arithmetic; shapes must match, except that a 1x1 operand
// broadcasts against any shape.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator+(const Var& a, double s) { return add_scalar(a, s); }
inline Var operator-(const Var& a, double s) { return add_scalar(a, -s); }

Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

// (n x m) op (1 x m) row broadcast, and (n x m) op (n x 1) column broadcast.
Var add_row(const Var& a, const Var& row);
Var mul_row(const Var& a, const Var& row);
Var mul_col(const Var& a, const Var& col);
// Repeats a 1 x m row n times.
Var repeat_rows(const Var& row, Eigen::Index n);

Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var relu(const Var& a);
// 0/1 indicator of a > 0, carried as a constant (ReLU subgradient at 0 is 0).
Var relu_mask(const Var& a);

Var sum(const Var& a);
Var row_sum(const Var& a);
Var col_sum(const Var& a);

Var rows(const Var& a, Eigen::Index start, Eigen::Index n);
Var cols(const Var& a, Eigen::Index start, Eigen::Index n);
Var vcat(std::span<const Var> parts);
Var hcat(std::span<const Var> parts);
// Reshapes the contiguous segment [offset, offset + r*c) of a column vector
// into an r x c column-major matrix.
Var segment(const Var& flat, Eigen::Index offset, Eigen::Index r, Eigen::Index c);

// Solves A X = B for symmetric positive definite A. Throws
// numerically_singular_kernel when the Cholesky factorization fails.
Var solve_spd(const Var& a, const Var& b);

// (n x 1), (m x 1) -> n x m with entries a_i - b_j.
Var pairwise_diff(const Var& a, const Var& b);

}  // namespace sdrom::ad
