#include "cfr/fusion.hpp"

#include "cfr/errors.hpp"
#include "cfr/ops.hpp"

namespace cfr {

const char* axis_name(SoftmaxAxis axis) { return axis == SoftmaxAxis::Flat ? "flat" : "rows"; }

SoftmaxAxis axis_from_name(const std::string& name) {
  if (name == "flat") return SoftmaxAxis::Flat;
  if (name == "rows") return SoftmaxAxis::Rows;
  throw ArgumentError("softmax axis must be 'flat' or 'rows', got '" + name + "'");
}

BilinearParams BilinearParams::zeros(std::size_t d_q, std::size_t d_i, std::size_t d) {
  return {Matrix(d_q, d), Matrix(d_i, d), Matrix(d_q, d), Matrix(d_i, d)};
}

void BilinearParams::validate() const {
  const std::size_t d = joint_dim();
  if (Mi.cols() != d || Mq_att.cols() != d || Mi_att.cols() != d) {
    throw ShapeError("fusion: factor matrices disagree on joint dim (" + Mq.shape().str() + ", " +
                     Mi.shape().str() + ", " + Mq_att.shape().str() + ", " +
                     Mi_att.shape().str() + ")");
  }
  if (Mq.rows() != Mq_att.rows() || Mi.rows() != Mi_att.rows()) {
    throw ShapeError("fusion: value and attention factors disagree on input dims");
  }
}

namespace {

void check_inputs(const Matrix& xq, const Matrix& xi, const BilinearParams& p) {
  p.validate();
  if (xq.rows() == 0 || xi.rows() == 0) throw ShapeError("fusion: empty instance set");
  if (xq.cols() != p.Mq.rows()) {
    throw ShapeError("fusion: question input " + xq.shape().str() + " vs factor " +
                     p.Mq.shape().str());
  }
  if (xi.cols() != p.Mi.rows()) {
    throw ShapeError("fusion: image input " + xi.shape().str() + " vs factor " +
                     p.Mi.shape().str());
  }
}

Matrix normalize(const Matrix& scores, SoftmaxAxis axis) {
  return axis == SoftmaxAxis::Flat ? softmax_flat(scores) : softmax_rows(scores);
}

Vector pool(const Matrix& val_q, const Matrix& attended) {
  return column_sums(hadamard(val_q, attended));
}

}  // namespace

Matrix attention_map(const Matrix& xq, const Matrix& xi, const BilinearParams& p,
                     SoftmaxAxis axis) {
  check_inputs(xq, xi, p);
  return normalize(matmul_nt(matmul(xq, p.Mq_att), matmul(xi, p.Mi_att)), axis);
}

Vector joint_representation(const Matrix& xq, const Matrix& xi, const Matrix& attention,
                            const BilinearParams& p) {
  check_inputs(xq, xi, p);
  if (attention.shape() != Shape{xq.rows(), xi.rows()}) {
    throw ShapeError("joint_representation: attention " + attention.shape().str() +
                     ", expected " + Shape{xq.rows(), xi.rows()}.str());
  }
  return pool(matmul(xq, p.Mq), matmul(attention, matmul(xi, p.Mi)));
}

FusionTrace fusion_forward(const Matrix& xq, const Matrix& xi, const BilinearParams& p,
                           SoftmaxAxis axis) {
  check_inputs(xq, xi, p);
  FusionTrace tr;
  tr.xq = xq;
  tr.xi = xi;
  tr.axis = axis;
  tr.att_q = matmul(xq, p.Mq_att);
  tr.att_i = matmul(xi, p.Mi_att);
  tr.out.attention = normalize(matmul_nt(tr.att_q, tr.att_i), axis);
  tr.val_q = matmul(xq, p.Mq);
  tr.val_i = matmul(xi, p.Mi);
  tr.attended = matmul(tr.out.attention, tr.val_i);
  tr.out.joint = pool(tr.val_q, tr.attended);
  return tr;
}

FusionOutput fuse(const Matrix& xq, const Matrix& xi, const BilinearParams& p, SoftmaxAxis axis) {
  return fusion_forward(xq, xi, p, axis).out;
}

FusionInputGrads fusion_backward(const FusionTrace& tr, const BilinearParams& p,
                                 std::span<const double> d_joint, BilinearParams& g) {
  const std::size_t d = p.joint_dim();
  if (d_joint.size() != d) throw ShapeError("fusion backward: joint gradient length mismatch");

  // j = colsum(Vq ⊙ (A Vi))
  Matrix d_val_q = tr.attended;
  Matrix d_attended = tr.val_q;
  for (std::size_t a = 0; a < d_val_q.rows(); ++a) {
    for (std::size_t k = 0; k < d; ++k) {
      d_val_q(a, k) *= d_joint[k];
      d_attended(a, k) *= d_joint[k];
    }
  }
  const Matrix& A = tr.out.attention;
  const Matrix d_A = matmul_nt(d_attended, tr.val_i);
  const Matrix d_val_i = matmul_tn(A, d_attended);

  const Matrix d_scores = tr.axis == SoftmaxAxis::Flat ? softmax_flat_backward(A, d_A)
                                                       : softmax_rows_backward(A, d_A);
  const Matrix d_att_q = matmul(d_scores, tr.att_i);
  const Matrix d_att_i = matmul_tn(d_scores, tr.att_q);

  g.Mq += matmul_tn(tr.xq, d_val_q);
  g.Mi += matmul_tn(tr.xi, d_val_i);
  g.Mq_att += matmul_tn(tr.xq, d_att_q);
  g.Mi_att += matmul_tn(tr.xi, d_att_i);

  FusionInputGrads in;
  in.dxq = matmul_nt(d_val_q, p.Mq) + matmul_nt(d_att_q, p.Mq_att);
  in.dxi = matmul_nt(d_val_i, p.Mi) + matmul_nt(d_att_i, p.Mi_att);
  return in;
}

}  // namespace cfr
