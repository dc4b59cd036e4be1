#include "cfr/gru.hpp"

#include <cmath>

#include "cfr/errors.hpp"
#include "cfr/ops.hpp"

namespace cfr {

GruParams GruParams::zeros(std::size_t d_in, std::size_t d_h) {
  GruParams p;
  for (Matrix* w : {&p.Wz, &p.Wr, &p.Wn}) *w = Matrix(d_in, d_h);
  for (Matrix* u : {&p.Uz, &p.Ur, &p.Un}) *u = Matrix(d_h, d_h);
  for (Matrix* b : {&p.bz, &p.br, &p.bn}) *b = Matrix(1, d_h);
  return p;
}

void GruParams::validate() const {
  const Shape in{input_dim(), hidden_dim()};
  const Shape rec{hidden_dim(), hidden_dim()};
  const Shape bias{1, hidden_dim()};
  for (const Matrix* w : {&Wz, &Wr, &Wn}) {
    if (w->shape() != in) throw ShapeError("gru: input weight " + w->shape().str() + ", expected " + in.str());
  }
  for (const Matrix* u : {&Uz, &Ur, &Un}) {
    if (u->shape() != rec) throw ShapeError("gru: recurrent weight " + u->shape().str() + ", expected " + rec.str());
  }
  for (const Matrix* b : {&bz, &br, &bn}) {
    if (b->shape() != bias) throw ShapeError("gru: bias " + b->shape().str() + ", expected " + bias.str());
  }
}

GruTrace gru_forward(const Matrix& inputs, const GruParams& p) {
  p.validate();
  if (inputs.cols() != p.input_dim()) {
    throw ShapeError("gru: input dim " + std::to_string(inputs.cols()) + " but GRU expects " +
                     std::to_string(p.input_dim()));
  }
  const std::size_t T = inputs.rows();
  const std::size_t H = p.hidden_dim();

  // Input contributions for all steps at once.
  const Matrix xz = linear(inputs, p.Wz, p.bz);
  const Matrix xr = linear(inputs, p.Wr, p.br);
  const Matrix xn = linear(inputs, p.Wn, p.bn);

  GruTrace tr{inputs, Matrix(T, H), Matrix(T, H), Matrix(T, H), Matrix(T, H)};
  Matrix h_prev(1, H);
  Matrix rh(1, H);
  for (std::size_t t = 0; t < T; ++t) {
    const Matrix hz = matmul(h_prev, p.Uz);
    const Matrix hr = matmul(h_prev, p.Ur);
    for (std::size_t k = 0; k < H; ++k) {
      tr.update(t, k) = sigmoid(xz(t, k) + hz(0, k));
      tr.reset(t, k) = sigmoid(xr(t, k) + hr(0, k));
      rh(0, k) = tr.reset(t, k) * h_prev(0, k);
    }
    const Matrix hn = matmul(rh, p.Un);
    for (std::size_t k = 0; k < H; ++k) {
      const double n = std::tanh(xn(t, k) + hn(0, k));
      const double z = tr.update(t, k);
      tr.cand(t, k) = n;
      tr.hidden(t, k) = (1.0 - z) * h_prev(0, k) + z * n;
    }
    std::copy(tr.hidden.row(t).begin(), tr.hidden.row(t).end(), h_prev.row(0).begin());
  }
  return tr;
}

void gru_backward(const GruTrace& tr, const GruParams& p, const Matrix& d_hidden,
                  GruParams& g) {
  const std::size_t T = tr.hidden.rows();
  const std::size_t H = p.hidden_dim();
  if (d_hidden.shape() != tr.hidden.shape()) {
    throw ShapeError("gru backward: gradient " + d_hidden.shape().str() + " vs states " +
                     tr.hidden.shape().str());
  }

  Matrix dh_next(1, H);
  Matrix da_z(1, H), da_r(1, H), da_n(1, H), h_prev(1, H), rh(1, H);
  for (std::size_t step = T; step-- > 0;) {
    for (std::size_t k = 0; k < H; ++k) h_prev(0, k) = step == 0 ? 0.0 : tr.hidden(step - 1, k);

    Matrix dh(1, H);
    for (std::size_t k = 0; k < H; ++k) dh(0, k) = d_hidden(step, k) + dh_next(0, k);

    Matrix dh_prev(1, H);
    for (std::size_t k = 0; k < H; ++k) {
      const double z = tr.update(step, k);
      const double n = tr.cand(step, k);
      const double dn = dh(0, k) * z;
      const double dz = dh(0, k) * (n - h_prev(0, k));
      dh_prev(0, k) = dh(0, k) * (1.0 - z);
      da_n(0, k) = dn * (1.0 - n * n);
      da_z(0, k) = dz * z * (1.0 - z);
      rh(0, k) = tr.reset(step, k) * h_prev(0, k);
    }

    // candidate path: a_n = x Wn + (r ⊙ h_prev) Un + bn
    const Matrix d_rh = matmul_nt(da_n, p.Un);
    g.Un += matmul_tn(rh, da_n);
    for (std::size_t k = 0; k < H; ++k) {
      const double r = tr.reset(step, k);
      da_r(0, k) = d_rh(0, k) * h_prev(0, k) * r * (1.0 - r);
      dh_prev(0, k) += d_rh(0, k) * r;
    }

    const Matrix x = Matrix::row_vector(tr.inputs.row(step));
    g.Wn += matmul_tn(x, da_n);
    g.bn += da_n;
    g.Wz += matmul_tn(x, da_z);
    g.bz += da_z;
    g.Wr += matmul_tn(x, da_r);
    g.br += da_r;
    g.Uz += matmul_tn(h_prev, da_z);
    g.Ur += matmul_tn(h_prev, da_r);

    dh_prev += matmul_nt(da_z, p.Uz);
    dh_prev += matmul_nt(da_r, p.Ur);
    dh_next = dh_prev;
  }
}

Matrix gru_encode(std::span<const std::string> tokens, const WordVectors& words,
                  const GruParams& params) {
  if (words.dim() != params.input_dim()) {
    throw ShapeError("gru_encode: embedding dim " + std::to_string(words.dim()) +
                     " does not match GRU input dim " + std::to_string(params.input_dim()));
  }
  return gru_forward(embed_tokens(tokens, words), params).hidden;
}

}  // namespace cfr
