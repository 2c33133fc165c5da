#include "sdrom/ad.hpp"

#include "sdrom/error.hpp"

#include <cmath>
#include <string>

namespace sdrom::ad {

double Var::scalar() const {
  const Mat& v = value();
  if (v.size() != 1) {
    throw Error(ErrorCode::dimension_mismatch,
                "scalar() on a " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) + " value");
  }
  return v(0, 0);
}

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), nullptr, false, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), nullptr, record_, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::push(Mat value, std::initializer_list<Var> parents, Backward back) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(back));
}

Var Tape::push(Mat value, std::span<const Var> parents, Backward back) {
  bool needs = false;
  if (record_) {
    for (const Var& p : parents) {
      if (p.tape_ != this) throw Error(ErrorCode::invalid_argument, "Var used with a foreign tape");
      needs = needs || nodes_[p.id_].needs_grad;
    }
  }
  nodes_.push_back(Node{std::move(value), Mat(), needs ? std::move(back) : Backward{}, needs, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Mat& Tape::accum(int id) {
  Node& n = nodes_[id];
  if (!n.has_adj) {
    n.adj = Mat::Zero(n.value.rows(), n.value.cols());
    n.has_adj = true;
  }
  return n.adj;
}

void Tape::backward(const Var& output) {
  if (output.tape_ != this || nodes_[output.id_].value.size() != 1) {
    throw Error(ErrorCode::invalid_argument, "backward() needs a 1x1 output on this tape");
  }
  if (!nodes_[output.id_].needs_grad) return;
  accum(output.id_).setOnes();
  for (int id = output.id_; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.needs_grad && n.has_adj && n.back) n.back(*this, id);
  }
}

Mat Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id_];
  if (!n.has_adj) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.adj;
}

namespace {

void check_same_or_scalar(const Mat& a, const Mat& b, const char* op) {
  bool ok = (a.rows() == b.rows() && a.cols() == b.cols()) || a.size() == 1 || b.size() == 1;
  if (!ok) {
    throw Error(ErrorCode::dimension_mismatch,
                std::string(op) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

// Expands a 1x1 operand to the given shape.
Mat expand(const Mat& m, Eigen::Index r, Eigen::Index c) {
  if (m.rows() == r && m.cols() == c) return m;
  return Mat::Constant(r, c, m(0, 0));
}

// Adds g into the adjoint of id, summing when id is a broadcast scalar.
void accum_reduced(Tape& t, int id, const Mat& g) {
  Mat& acc = t.accum(id);
  if (acc.rows() == g.rows() && acc.cols() == g.cols()) {
    acc += g;
  } else {
    acc(0, 0) += g.sum();
  }
}

Eigen::Index out_rows(const Mat& a, const Mat& b) { return a.size() == 1 ? b.rows() : a.rows(); }
Eigen::Index out_cols(const Mat& a, const Mat& b) { return a.size() == 1 ? b.cols() : a.cols(); }

}  // namespace

Var add(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  const Mat& av = a.value();
  const Mat& bv = b.value();
  check_same_or_scalar(av, bv, "add");
  Eigen::Index r = out_rows(av, bv), c = out_cols(av, bv);
  Mat out = expand(av, r, c) + expand(bv, r, c);
  int ia = a.id(), ib = b.id();
  return t.push(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    if (t.needs_grad(ia)) accum_reduced(t, ia, g);
    if (t.needs_grad(ib)) accum_reduced(t, ib, g);
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  const Mat& av = a.value();
  const Mat& bv = b.value();
  check_same_or_scalar(av, bv, "sub");
  Eigen::Index r = out_rows(av, bv), c = out_cols(av, bv);
  Mat out = expand(av, r, c) - expand(bv, r, c);
  int ia = a.id(), ib = b.id();
  return t.push(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    if (t.needs_grad(ia)) accum_reduced(t, ia, g);
    if (t.needs_grad(ib)) accum_reduced(t, ib, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  const Mat& av = a.value();
  const Mat& bv = b.value();
  check_same_or_scalar(av, bv, "mul");
  Eigen::Index r = out_rows(av, bv), c = out_cols(av, bv);
  Mat out = expand(av, r, c).cwiseProduct(expand(bv, r, c));
  int ia = a.id(), ib = b.id();
  return t.push(std::move(out), {a, b}, [ia, ib, r, c](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    if (t.needs_grad(ia)) accum_reduced(t, ia, g.cwiseProduct(expand(t.value(ib), r, c)));
    if (t.needs_grad(ib)) accum_reduced(t, ib, g.cwiseProduct(expand(t.value(ia), r, c)));
  });
}

Var div(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  const Mat& av = a.value();
  const Mat& bv = b.value();
  check_same_or_scalar(av, bv, "div");
  Eigen::Index r = out_rows(av, bv), c = out_cols(av, bv);
  Mat out = expand(av, r, c).cwiseQuotient(expand(bv, r, c));
  int ia = a.id(), ib = b.id();
  return t.push(std::move(out), {a, b}, [ia, ib, r, c](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    Mat bx = expand(t.value(ib), r, c);
    if (t.needs_grad(ia)) accum_reduced(t, ia, g.cwiseQuotient(bx));
    if (t.needs_grad(ib)) {
      const Mat& y = t.value(self);
      accum_reduced(t, ib, -g.cwiseProduct(y).cwiseQuotient(bx));
    }
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double s) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.push(a.value() * s, {a}, [ia, s](Tape& t, int self) { t.accum(ia) += s * t.adjoint(self); });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out = a.value().array() + s;
  return t.push(std::move(out), {a}, [ia](Tape& t, int self) { t.accum(ia) += t.adjoint(self); });
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                                                   std::to_string(b.rows()));
  }
  Mat out = a.value() * b.value();
  int ia = a.id(), ib = b.id();
  return t.push(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    if (t.needs_grad(ia)) t.accum(ia).noalias() += g * t.value(ib).transpose();
    if (t.needs_grad(ib)) t.accum(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "matmul_nt: inner dimensions " + std::to_string(a.cols()) + " vs " +
                                                   std::to_string(b.cols()));
  }
  Mat out = a.value() * b.value().transpose();
  int ia = a.id(), ib = b.id();
  return t.push(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    if (t.needs_grad(ia)) t.accum(ia).noalias() += g * t.value(ib);
    if (t.needs_grad(ib)) t.accum(ib).noalias() += g.transpose() * t.value(ia);
  });
}

Var transpose(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.push(a.value().transpose(), {a},
                [ia](Tape& t, int self) { t.accum(ia) += t.adjoint(self).transpose(); });
}

Var add_row(const Var& a, const Var& row) {
  Tape& t = *a.tape();
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "add_row: row shape does not match columns");
  }
  Mat out = a.value().rowwise() + row.value().row(0);
  int ia = a.id(), ir = row.id();
  return t.push(std::move(out), {a, row}, [ia, ir](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    if (t.needs_grad(ia)) t.accum(ia) += g;
    if (t.needs_grad(ir)) t.accum(ir) += g.colwise().sum();
  });
}

Var mul_row(const Var& a, const Var& row) {
  Tape& t = *a.tape();
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "mul_row: row shape does not match columns");
  }
  Mat out = a.value().array().rowwise() * row.value().row(0).array();
  int ia = a.id(), ir = row.id();
  return t.push(std::move(out), {a, row}, [ia, ir](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    if (t.needs_grad(ia)) t.accum(ia).array() += g.array().rowwise() * t.value(ir).row(0).array();
    if (t.needs_grad(ir)) t.accum(ir) += g.cwiseProduct(t.value(ia)).colwise().sum();
  });
}

Var mul_col(const Var& a, const Var& col) {
  Tape& t = *a.tape();
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "mul_col: column shape does not match rows");
  }
  Mat out = a.value().array().colwise() * col.value().col(0).array();
  int ia = a.id(), ic = col.id();
  return t.push(std::move(out), {a, col}, [ia, ic](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    if (t.needs_grad(ia)) t.accum(ia).array() += g.array().colwise() * t.value(ic).col(0).array();
    if (t.needs_grad(ic)) t.accum(ic) += g.cwiseProduct(t.value(ia)).rowwise().sum();
  });
}

Var repeat_rows(const Var& row, Eigen::Index n) {
  Tape& t = *row.tape();
  if (row.rows() != 1) throw Error(ErrorCode::dimension_mismatch, "repeat_rows expects a single row");
  Mat out = row.value().replicate(n, 1);
  int ir = row.id();
  return t.push(std::move(out), {row},
                [ir](Tape& t, int self) { t.accum(ir) += t.adjoint(self).colwise().sum(); });
}

Var exp(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.push(a.value().array().exp().matrix(), {a}, [ia](Tape& t, int self) {
    t.accum(ia) += t.adjoint(self).cwiseProduct(t.value(self));
  });
}

Var log(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.push(a.value().array().log().matrix(), {a}, [ia](Tape& t, int self) {
    t.accum(ia) += t.adjoint(self).cwiseQuotient(t.value(ia));
  });
}

Var square(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.push(a.value().array().square().matrix(), {a}, [ia](Tape& t, int self) {
    t.accum(ia) += 2.0 * t.adjoint(self).cwiseProduct(t.value(ia));
  });
}

Var relu(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.push(a.value().cwiseMax(0.0), {a}, [ia](Tape& t, int self) {
    t.accum(ia).array() += (t.value(ia).array() > 0.0).select(t.adjoint(self).array(), 0.0);
  });
}

Var relu_mask(const Var& a) {
  Mat m = (a.value().array() > 0.0).cast<double>().matrix();
  return a.tape()->constant(std::move(m));
}

Var sum(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), {a}, [ia](Tape& t, int self) { t.accum(ia).array() += t.adjoint(self)(0, 0); });
}

Var row_sum(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.push(a.value().rowwise().sum(), {a}, [ia](Tape& t, int self) {
    t.accum(ia).colwise() += t.adjoint(self).col(0);
  });
}

Var col_sum(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.push(a.value().colwise().sum(), {a}, [ia](Tape& t, int self) {
    t.accum(ia).rowwise() += t.adjoint(self).row(0);
  });
}

Var rows(const Var& a, Eigen::Index start, Eigen::Index n) {
  Tape& t = *a.tape();
  if (start < 0 || n < 0 || start + n > a.rows()) throw Error(ErrorCode::dimension_mismatch, "rows: out of range");
  int ia = a.id();
  return t.push(a.value().middleRows(start, n), {a}, [ia, start, n](Tape& t, int self) {
    t.accum(ia).middleRows(start, n) += t.adjoint(self);
  });
}

Var cols(const Var& a, Eigen::Index start, Eigen::Index n) {
  Tape& t = *a.tape();
  if (start < 0 || n < 0 || start + n > a.cols()) throw Error(ErrorCode::dimension_mismatch, "cols: out of range");
  int ia = a.id();
  return t.push(a.value().middleCols(start, n), {a}, [ia, start, n](Tape& t, int self) {
    t.accum(ia).middleCols(start, n) += t.adjoint(self);
  });
}

Var vcat(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::invalid_argument, "vcat of nothing");
  Tape& t = *parts[0].tape();
  Eigen::Index c = parts[0].cols(), r = 0;
  for (const Var& p : parts) {
    if (p.cols() != c) throw Error(ErrorCode::dimension_mismatch, "vcat: column counts differ");
    r += p.rows();
  }
  Mat out(r, c);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.rows();
  }
  return t.push(std::move(out), parts, [ids, offsets](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.needs_grad(ids[k])) t.accum(ids[k]) += g.middleRows(offsets[k], t.value(ids[k]).rows());
    }
  });
}

Var hcat(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::invalid_argument, "hcat of nothing");
  Tape& t = *parts[0].tape();
  Eigen::Index r = parts[0].rows(), c = 0;
  for (const Var& p : parts) {
    if (p.rows() != r) throw Error(ErrorCode::dimension_mismatch, "hcat: row counts differ");
    c += p.cols();
  }
  Mat out(r, c);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
  }
  return t.push(std::move(out), parts, [ids, offsets](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.needs_grad(ids[k])) t.accum(ids[k]) += g.middleCols(offsets[k], t.value(ids[k]).cols());
    }
  });
}

Var segment(const Var& flat, Eigen::Index offset, Eigen::Index r, Eigen::Index c) {
  Tape& t = *flat.tape();
  if (flat.cols() != 1 || offset < 0 || offset + r * c > flat.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "segment: out of range");
  }
  Mat out = Eigen::Map<const Mat>(flat.value().data() + offset, r, c);
  int ia = flat.id();
  return t.push(std::move(out), {flat}, [ia, offset, r, c](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    t.accum(ia).middleRows(offset, r * c) += Eigen::Map<const Eigen::VectorXd>(g.data(), r * c);
  });
}

Var solve_spd(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  if (a.rows() != a.cols() || a.rows() != b.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "solve_spd: incompatible shapes");
  }
  Eigen::LLT<Mat> llt(a.value());
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::numerically_singular_kernel, "Cholesky factorization of the kernel matrix failed");
  }
  Mat x = llt.solve(b.value());
  if (!x.allFinite()) throw Error(ErrorCode::numerically_singular_kernel, "kernel solve produced non-finite values");
  int ia = a.id(), ib = b.id();
  // X = A^{-1} B:  gB = A^{-1} G,  gA = -gB X^T.
  return t.push(std::move(x), {a, b}, [ia, ib, llt = std::move(llt)](Tape& t, int self) {
    Mat gb = llt.solve(t.adjoint(self));
    if (t.needs_grad(ia)) t.accum(ia).noalias() -= gb * t.value(self).transpose();
    if (t.needs_grad(ib)) t.accum(ib) += gb;
  });
}

Var pairwise_diff(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  if (a.cols() != 1 || b.cols() != 1) throw Error(ErrorCode::dimension_mismatch, "pairwise_diff expects columns");
  Mat out = a.value().replicate(1, b.rows()) - b.value().transpose().replicate(a.rows(), 1);
  int ia = a.id(), ib = b.id();
  return t.push(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.adjoint(self);
    if (t.needs_grad(ia)) t.accum(ia) += g.rowwise().sum();
    if (t.needs_grad(ib)) t.accum(ib) -= g.colwise().sum().transpose();
  });
}

}  // namespace sdrom::ad
