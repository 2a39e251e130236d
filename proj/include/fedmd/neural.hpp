#ifndef FEDMD_NEURAL_HPP
#define FEDMD_NEURAL_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "fedmd/common.hpp"
#include "fedmd/rng.hpp"

namespace fedmd {

// ============================================================
// layers and parameter containers
// ============================================================

/// Fully connected layer; w has one row per input unit, one column per output
/// unit, so y_o = b_o + sum_i x_i * w(i, o).
struct DenseLayer {
  Matrix w;
  Vec b;

  std::size_t fan_in() const { return w.rows; }
  std::size_t fan_out() const { return w.cols; }

  bool operator==(const DenseLayer& o) const { return w == o.w && b == o.b; }
};

struct NetworkWeights {
  std::vector<DenseLayer> layers;

  bool same_shape(const NetworkWeights& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (!layers[l].w.same_shape(o.layers[l].w)) return false;
      if (layers[l].b.size() != o.layers[l].b.size()) return false;
    }
    return true;
  }

  bool operator==(const NetworkWeights& o) const { return layers == o.layers; }
};

inline NetworkWeights zeros_like(const NetworkWeights& net) {
  NetworkWeights z = net;
  for (auto& l : z.layers) {
    std::fill(l.w.data.begin(), l.w.data.end(), 0.0);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
  return z;
}

/// Flat wire form: per layer, weights row-major then biases.
inline Vec flatten(const NetworkWeights& net) {
  Vec out;
  for (const auto& l : net.layers) {
    out.insert(out.end(), l.w.data.begin(), l.w.data.end());
    out.insert(out.end(), l.b.begin(), l.b.end());
  }
  return out;
}

inline void unflatten(NetworkWeights& net, const Vec& flat) {
  std::size_t pos = 0;
  for (auto& l : net.layers) {
    for (double& v : l.w.data) v = flat[pos++];
    for (double& v : l.b) v = flat[pos++];
  }
  require(pos == flat.size(), "DimensionMismatch: unflatten length");
}

inline std::size_t parameter_count(const NetworkWeights& net) {
  std::size_t n = 0;
  for (const auto& l : net.layers) n += l.w.data.size() + l.b.size();
  return n;
}

// ============================================================
// autoencoder models
// ============================================================

enum class ModelKind { Vae, Ae };

inline const char* model_kind_name(ModelKind k) { return k == ModelKind::Vae ? "vae" : "ae"; }

/// Either a variational or a plain autoencoder over histogram inputs.
/// VAE layers: encoder, mu head, logvar head, decoder hidden, decoder output.
/// AE layers:  encoder, latent, decoder hidden, decoder output.
/// Hidden layers use ReLU, the two latent heads are linear, and the output
/// layer is a sigmoid.
struct Autoencoder {
  ModelKind kind = ModelKind::Vae;
  int input_dim = 0;
  int hidden_dim = 0;
  int latent_dim = 0;
  NetworkWeights net;
};

namespace detail {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline Vec affine(const DenseLayer& l, const Vec& x) {
  Vec y(l.fan_out());
  for (std::size_t o = 0; o < y.size(); ++o) y[o] = l.b[o];
  for (std::size_t i = 0; i < x.size(); ++i) {
    double xi = x[i];
    const double* wrow = l.w.row(i);
    for (std::size_t o = 0; o < y.size(); ++o) y[o] += xi * wrow[o];
  }
  return y;
}

inline void relu_inplace(Vec& v) {
  for (double& x : v) x = (x > 0.0) ? x : 0.0;
}

inline void sigmoid_inplace(Vec& v) {
  for (double& x : v) x = sigmoid(x);
}

inline DenseLayer glorot_layer(std::size_t in, std::size_t out, Rng& rng) {
  DenseLayer l;
  l.w = Matrix(in, out);
  l.b.assign(out, 0.0);
  double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& v : l.w.data) v = rng.uniform(-bound, bound);
  return l;
}

}  // namespace detail

/// Latent width rule shared by both model kinds: hidden = ceil(K/2),
/// latent = ceil(K/3).
inline Autoencoder make_autoencoder_dims(ModelKind kind, int input_dim, int hidden_dim,
                                         int latent_dim, std::uint64_t seed) {
  require(input_dim >= 1 && hidden_dim >= 1 && latent_dim >= 1,
          "BadArgument: autoencoder dims must be >= 1");
  Rng rng(derive_seed(seed, 0xae11u));
  Autoencoder m;
  m.kind = kind;
  m.input_dim = input_dim;
  m.hidden_dim = hidden_dim;
  m.latent_dim = latent_dim;
  auto in = static_cast<std::size_t>(input_dim);
  auto hid = static_cast<std::size_t>(hidden_dim);
  auto lat = static_cast<std::size_t>(latent_dim);
  m.net.layers.push_back(detail::glorot_layer(in, hid, rng));
  m.net.layers.push_back(detail::glorot_layer(hid, lat, rng));
  if (kind == ModelKind::Vae) m.net.layers.push_back(detail::glorot_layer(hid, lat, rng));
  m.net.layers.push_back(detail::glorot_layer(lat, hid, rng));
  m.net.layers.push_back(detail::glorot_layer(hid, in, rng));
  return m;
}

inline Autoencoder make_autoencoder(ModelKind kind, int input_dim, std::uint64_t seed) {
  return make_autoencoder_dims(kind, input_dim, ceil_div(input_dim, 2),
                               ceil_div(input_dim, 3), seed);
}

struct VaeForward {
  Vec recon;
  Vec z_mu;
  Vec z_logvar;
  Vec z;
};

/// Forward pass with caller-supplied reparameterization noise;
/// z = z_mu + exp(0.5 * z_logvar) * noise. Zero noise gives the
/// deterministic mean decode.
inline VaeForward vae_forward(const Autoencoder& m, const Vec& x, const Vec& noise) {
  require(m.kind == ModelKind::Vae, "BadModel: vae_forward on a plain autoencoder");
  require(static_cast<int>(x.size()) == m.input_dim, "DimensionMismatch: vae_forward input");
  require(static_cast<int>(noise.size()) == m.latent_dim, "DimensionMismatch: vae_forward noise");
  VaeForward f;
  Vec h1 = detail::affine(m.net.layers[0], x);
  detail::relu_inplace(h1);
  f.z_mu = detail::affine(m.net.layers[1], h1);
  f.z_logvar = detail::affine(m.net.layers[2], h1);
  f.z.resize(f.z_mu.size());
  for (std::size_t j = 0; j < f.z.size(); ++j)
    f.z[j] = f.z_mu[j] + std::exp(0.5 * f.z_logvar[j]) * noise[j];
  Vec h2 = detail::affine(m.net.layers[3], f.z);
  detail::relu_inplace(h2);
  f.recon = detail::affine(m.net.layers[4], h2);
  detail::sigmoid_inplace(f.recon);
  return f;
}

inline Vec ae_forward(const Autoencoder& m, const Vec& x) {
  require(m.kind == ModelKind::Ae, "BadModel: ae_forward on a variational autoencoder");
  require(static_cast<int>(x.size()) == m.input_dim, "DimensionMismatch: ae_forward input");
  Vec h1 = detail::affine(m.net.layers[0], x);
  detail::relu_inplace(h1);
  Vec z = detail::affine(m.net.layers[1], h1);
  detail::relu_inplace(z);
  Vec h2 = detail::affine(m.net.layers[2], z);
  detail::relu_inplace(h2);
  Vec y = detail::affine(m.net.layers[3], h2);
  detail::sigmoid_inplace(y);
  return y;
}

inline double rmse(const Vec& a, const Vec& b) {
  require(a.size() == b.size() && !a.empty(), "DimensionMismatch: rmse");
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

/// KL divergence of N(z_mu, exp(z_logvar)) from the unit Gaussian prior,
/// summed over latent dimensions. Zero exactly at z_mu = 0, z_logvar = 0.
inline double kl_term(const Vec& z_mu, const Vec& z_logvar) {
  double s = 0.0;
  for (std::size_t j = 0; j < z_mu.size(); ++j)
    s += z_mu[j] * z_mu[j] + std::exp(z_logvar[j]) - z_logvar[j] - 1.0;
  return 0.5 * s;
}

/// Per-sample VAE objective: reconstruction RMSE plus the KL term.
inline double vae_loss(const Vec& x, const VaeForward& f) {
  return rmse(x, f.recon) + kl_term(f.z_mu, f.z_logvar);
}

/// Deterministic reconstruction error used for thresholding and detection;
/// a VAE decodes the posterior mean (zero noise).
inline double reconstruction_error(const Autoencoder& m, const Vec& x) {
  if (m.kind == ModelKind::Vae) {
    Vec zero(static_cast<std::size_t>(m.latent_dim), 0.0);
    return rmse(x, vae_forward(m, x, zero).recon);
  }
  return rmse(x, ae_forward(m, x));
}

// ============================================================
// gradients and training
// ============================================================

namespace detail {

/// Accumulates one sample's parameter gradients into grad (scaled by `scale`).
inline double accumulate_gradients(const Autoencoder& m, const Vec& x, const Vec* noise,
                                   NetworkWeights& grad, double scale) {
  const double tiny = 1e-15;
  if (m.kind == ModelKind::Vae) {
    const auto& L0 = m.net.layers[0];
    const auto& Lmu = m.net.layers[1];
    const auto& Llv = m.net.layers[2];
    const auto& L3 = m.net.layers[3];
    const auto& L4 = m.net.layers[4];

    Vec a1 = affine(L0, x);
    Vec h1 = a1;
    relu_inplace(h1);
    Vec zmu = affine(Lmu, h1);
    Vec zlv = affine(Llv, h1);
    Vec z(zmu.size());
    Vec s(zmu.size());
    for (std::size_t j = 0; j < z.size(); ++j) {
      s[j] = std::exp(0.5 * zlv[j]);
      z[j] = zmu[j] + s[j] * (*noise)[j];
    }
    Vec a2 = affine(L3, z);
    Vec h2 = a2;
    relu_inplace(h2);
    Vec a3 = affine(L4, h2);
    Vec y = a3;
    sigmoid_inplace(y);

    double e = rmse(x, y);
    double kl = kl_term(zmu, zlv);
    double loss = e + kl;

    const std::size_t K = x.size();
    Vec dy(K, 0.0);
    if (e > tiny) {
      for (std::size_t j = 0; j < K; ++j)
        dy[j] = (y[j] - x[j]) / (static_cast<double>(K) * e);
    }
    Vec da3(K);
    for (std::size_t j = 0; j < K; ++j) da3[j] = dy[j] * y[j] * (1.0 - y[j]);

    auto& G4 = grad.layers[4];
    Vec dh2(h2.size(), 0.0);
    for (std::size_t i = 0; i < h2.size(); ++i) {
      const double* wrow = L4.w.row(i);
      double* grow = G4.w.row(i);
      double acc = 0.0;
      for (std::size_t o = 0; o < K; ++o) {
        grow[o] += scale * h2[i] * da3[o];
        acc += wrow[o] * da3[o];
      }
      dh2[i] = acc;
    }
    for (std::size_t o = 0; o < K; ++o) G4.b[o] += scale * da3[o];

    Vec da2(h2.size());
    for (std::size_t i = 0; i < h2.size(); ++i) da2[i] = (a2[i] > 0.0) ? dh2[i] : 0.0;

    auto& G3 = grad.layers[3];
    Vec dz(z.size(), 0.0);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double* wrow = L3.w.row(i);
      double* grow = G3.w.row(i);
      double acc = 0.0;
      for (std::size_t o = 0; o < da2.size(); ++o) {
        grow[o] += scale * z[i] * da2[o];
        acc += wrow[o] * da2[o];
      }
      dz[i] = acc;
    }
    for (std::size_t o = 0; o < da2.size(); ++o) G3.b[o] += scale * da2[o];

    Vec dzmu(z.size()), dzlv(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) {
      dzmu[j] = dz[j] + zmu[j];
      dzlv[j] = dz[j] * (*noise)[j] * 0.5 * s[j] + 0.5 * (std::exp(zlv[j]) - 1.0);
    }

    auto& Gmu = grad.layers[1];
    auto& Glv = grad.layers[2];
    Vec dh1(h1.size(), 0.0);
    for (std::size_t i = 0; i < h1.size(); ++i) {
      const double* wmu = Lmu.w.row(i);
      const double* wlv = Llv.w.row(i);
      double* gmu = Gmu.w.row(i);
      double* glv = Glv.w.row(i);
      double acc = 0.0;
      for (std::size_t o = 0; o < z.size(); ++o) {
        gmu[o] += scale * h1[i] * dzmu[o];
        glv[o] += scale * h1[i] * dzlv[o];
        acc += wmu[o] * dzmu[o] + wlv[o] * dzlv[o];
      }
      dh1[i] = acc;
    }
    for (std::size_t o = 0; o < z.size(); ++o) {
      Gmu.b[o] += scale * dzmu[o];
      Glv.b[o] += scale * dzlv[o];
    }

    Vec da1(h1.size());
    for (std::size_t i = 0; i < h1.size(); ++i) da1[i] = (a1[i] > 0.0) ? dh1[i] : 0.0;
    auto& G0 = grad.layers[0];
    for (std::size_t i = 0; i < x.size(); ++i) {
      double* grow = G0.w.row(i);
      for (std::size_t o = 0; o < da1.size(); ++o) grow[o] += scale * x[i] * da1[o];
    }
    for (std::size_t o = 0; o < da1.size(); ++o) G0.b[o] += scale * da1[o];
    return loss;
  }

  // plain autoencoder
  const auto& L0 = m.net.layers[0];
  const auto& L1 = m.net.layers[1];
  const auto& L2 = m.net.layers[2];
  const auto& L3 = m.net.layers[3];

  Vec a1 = affine(L0, x);
  Vec h1 = a1;
  relu_inplace(h1);
  Vec a2 = affine(L1, h1);
  Vec z = a2;
  relu_inplace(z);
  Vec a3 = affine(L2, z);
  Vec h2 = a3;
  relu_inplace(h2);
  Vec a4 = affine(L3, h2);
  Vec y = a4;
  sigmoid_inplace(y);

  double e = rmse(x, y);
  const std::size_t K = x.size();
  Vec dy(K, 0.0);
  if (e > tiny) {
    for (std::size_t j = 0; j < K; ++j) dy[j] = (y[j] - x[j]) / (static_cast<double>(K) * e);
  }
  Vec da4(K);
  for (std::size_t j = 0; j < K; ++j) da4[j] = dy[j] * y[j] * (1.0 - y[j]);

  auto backprop_layer = [&](const DenseLayer& L, DenseLayer& G, const Vec& input,
                            const Vec& dout) {
    Vec din(input.size(), 0.0);
    for (std::size_t i = 0; i < input.size(); ++i) {
      const double* wrow = L.w.row(i);
      double* grow = G.w.row(i);
      double acc = 0.0;
      for (std::size_t o = 0; o < dout.size(); ++o) {
        grow[o] += scale * input[i] * dout[o];
        acc += wrow[o] * dout[o];
      }
      din[i] = acc;
    }
    for (std::size_t o = 0; o < dout.size(); ++o) G.b[o] += scale * dout[o];
    return din;
  };

  Vec dh2 = backprop_layer(L3, grad.layers[3], h2, da4);
  Vec da3(h2.size());
  for (std::size_t i = 0; i < h2.size(); ++i) da3[i] = (a3[i] > 0.0) ? dh2[i] : 0.0;
  Vec dz = backprop_layer(L2, grad.layers[2], z, da3);
  Vec da2(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) da2[i] = (a2[i] > 0.0) ? dz[i] : 0.0;
  Vec dh1 = backprop_layer(L1, grad.layers[1], h1, da2);
  Vec da1(h1.size());
  for (std::size_t i = 0; i < h1.size(); ++i) da1[i] = (a1[i] > 0.0) ? dh1[i] : 0.0;
  backprop_layer(L0, grad.layers[0], x, da1);
  return e;
}

}  // namespace detail

/// Mean loss over the rows of `data`. For a VAE, `noise` must hold one row of
/// reparameterization noise per sample; pass nullptr for zero noise.
inline double batch_loss(const Autoencoder& m, const Matrix& data, const Matrix* noise) {
  require(data.rows > 0, "EmptyDataset: batch_loss");
  double total = 0.0;
  Vec zero(static_cast<std::size_t>(m.latent_dim), 0.0);
  for (std::size_t i = 0; i < data.rows; ++i) {
    Vec x = data.row_vec(i);
    if (m.kind == ModelKind::Vae) {
      Vec eps = noise ? noise->row_vec(i) : zero;
      total += vae_loss(x, vae_forward(m, x, eps));
    } else {
      total += rmse(x, ae_forward(m, x));
    }
  }
  return total / static_cast<double>(data.rows);
}

/// Mean parameter gradients of batch_loss by backpropagation.
inline NetworkWeights batch_gradients(const Autoencoder& m, const Matrix& data,
                                      const Matrix* noise, double* loss_out = nullptr) {
  require(data.rows > 0, "EmptyDataset: batch_gradients");
  NetworkWeights grad = zeros_like(m.net);
  double total = 0.0;
  double scale = 1.0 / static_cast<double>(data.rows);
  Vec zero(static_cast<std::size_t>(m.latent_dim), 0.0);
  for (std::size_t i = 0; i < data.rows; ++i) {
    Vec x = data.row_vec(i);
    if (m.kind == ModelKind::Vae) {
      Vec eps = noise ? noise->row_vec(i) : zero;
      total += detail::accumulate_gradients(m, x, &eps, grad, scale);
    } else {
      total += detail::accumulate_gradients(m, x, nullptr, grad, scale);
    }
  }
  if (loss_out) *loss_out = total / static_cast<double>(data.rows);
  return grad;
}

/// RMSprop state; one accumulator per parameter.
struct RmsProp {
  double lr = 0.001;
  double rho = 0.9;
  double eps = 1e-8;
  NetworkWeights acc;
};

inline RmsProp make_rmsprop(const Autoencoder& m, double lr) {
  RmsProp opt;
  opt.lr = lr;
  opt.acc = zeros_like(m.net);
  return opt;
}

inline void rmsprop_step(RmsProp& opt, NetworkWeights& params, const NetworkWeights& grads) {
  require(params.same_shape(grads) && params.same_shape(opt.acc),
          "DimensionMismatch: rmsprop_step");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& P = params.layers[l];
    auto& A = opt.acc.layers[l];
    const auto& G = grads.layers[l];
    for (std::size_t i = 0; i < P.w.data.size(); ++i) {
      A.w.data[i] = opt.rho * A.w.data[i] + (1.0 - opt.rho) * G.w.data[i] * G.w.data[i];
      P.w.data[i] -= opt.lr * G.w.data[i] / std::sqrt(A.w.data[i] + opt.eps);
    }
    for (std::size_t i = 0; i < P.b.size(); ++i) {
      A.b[i] = opt.rho * A.b[i] + (1.0 - opt.rho) * G.b[i] * G.b[i];
      P.b[i] -= opt.lr * G.b[i] / std::sqrt(A.b[i] + opt.eps);
    }
  }
}

/// One pass over the data in a seeded shuffle order, mini-batch RMSprop
/// updates. Returns the mean per-sample loss seen during the pass.
inline double train_epoch(Autoencoder& m, const Matrix& data, RmsProp& opt, int batch_size,
                          std::uint64_t seed) {
  require(data.rows > 0, "EmptyDataset: train_epoch");
  require(static_cast<int>(data.cols) == m.input_dim, "DimensionMismatch: train_epoch data");
  require(batch_size >= 1, "BadArgument: train_epoch batch_size must be >= 1");

  Rng rng(derive_seed(seed, 0x7e0c4u));
  auto perm = rng.permutation(data.rows);

  double total = 0.0;
  std::size_t pos = 0;
  while (pos < data.rows) {
    std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(batch_size),
                                           data.rows - pos);
    Matrix batch(bs, data.cols);
    for (std::size_t i = 0; i < bs; ++i) batch.set_row(i, data.row_vec(perm[pos + i]));
    Matrix noise;
    Matrix* noise_ptr = nullptr;
    if (m.kind == ModelKind::Vae) {
      noise = Matrix(bs, static_cast<std::size_t>(m.latent_dim));
      for (double& v : noise.data) v = rng.normal();
      noise_ptr = &noise;
    }
    double batch_mean = 0.0;
    NetworkWeights grads = batch_gradients(m, batch, noise_ptr, &batch_mean);
    rmsprop_step(opt, m.net, grads);
    total += batch_mean * static_cast<double>(bs);
    pos += bs;
  }
  return total / static_cast<double>(data.rows);
}

// ============================================================
// restricted Boltzmann machines (CD-1 pretraining)
// ============================================================

/// Bernoulli RBM; w(i, j) couples visible unit i with hidden unit j,
/// a holds visible biases and b hidden biases.
struct RbmModel {
  Matrix w;  // Nv x Nh
  Vec a;     // visible biases
  Vec b;     // hidden biases

  std::size_t visible() const { return w.rows; }
  std::size_t hidden() const { return w.cols; }
};

inline RbmModel make_rbm(int n_visible, int n_hidden, std::uint64_t seed) {
  require(n_visible >= 1 && n_hidden >= 1, "BadArgument: rbm dims must be >= 1");
  Rng rng(derive_seed(seed, 0x4b31u));
  RbmModel r;
  r.w = Matrix(static_cast<std::size_t>(n_visible), static_cast<std::size_t>(n_hidden));
  for (double& v : r.w.data) v = rng.normal(0.0, 0.01);
  r.a.assign(static_cast<std::size_t>(n_visible), 0.0);
  r.b.assign(static_cast<std::size_t>(n_hidden), 0.0);
  return r;
}

/// P(h_j = 1 | v) = sigmoid(sum_i w_ij v_i + b_j).
inline Vec rbm_hidden_prob(const RbmModel& r, const Vec& v) {
  require(v.size() == r.visible(), "DimensionMismatch: rbm_hidden_prob");
  Vec p(r.hidden());
  for (std::size_t j = 0; j < p.size(); ++j) p[j] = r.b[j];
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double* wrow = r.w.row(i);
    for (std::size_t j = 0; j < p.size(); ++j) p[j] += wrow[j] * v[i];
  }
  for (double& x : p) x = detail::sigmoid(x);
  return p;
}

/// P(v_i = 1 | h) = sigmoid(sum_j w_ij h_j + a_i).
inline Vec rbm_visible_prob(const RbmModel& r, const Vec& h) {
  require(h.size() == r.hidden(), "DimensionMismatch: rbm_visible_prob");
  Vec p(r.visible());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double* wrow = r.w.row(i);
    double s = r.a[i];
    for (std::size_t j = 0; j < h.size(); ++j) s += wrow[j] * h[j];
    p[i] = detail::sigmoid(s);
  }
  return p;
}

/// Joint energy E(v, h) = -sum_ij w_ij v_i h_j - sum_i a_i v_i - sum_j b_j h_j.
inline double rbm_energy(const RbmModel& r, const Vec& v, const Vec& h) {
  require(v.size() == r.visible() && h.size() == r.hidden(), "DimensionMismatch: rbm_energy");
  double e = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double* wrow = r.w.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < h.size(); ++j) s += wrow[j] * h[j];
    e -= v[i] * s;
    e -= r.a[i] * v[i];
  }
  for (std::size_t j = 0; j < h.size(); ++j) e -= r.b[j] * h[j];
  return e;
}

/// Deterministic one-step reconstruction v -> p(h|v) -> p(v|h), no sampling.
inline double rbm_reconstruction_error(const RbmModel& r, const Matrix& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows; ++i) {
    Vec v = data.row_vec(i);
    Vec rec = rbm_visible_prob(r, rbm_hidden_prob(r, v));
    total += rmse(v, rec);
  }
  return total / static_cast<double>(data.rows);
}

/// Contrastive divergence with one Gibbs step, per-sample updates in a seeded
/// shuffle order. Hidden states are sampled on the data phase; the
/// reconstruction phase uses probabilities. Inputs must lie in [0, 1].
/// Returns the deterministic reconstruction error after each epoch.
inline Vec rbm_train_cd1(RbmModel& r, const Matrix& data, int epochs, double lr,
                         std::uint64_t seed) {
  require(data.rows > 0, "EmptyDataset: rbm_train_cd1");
  require(data.cols == r.visible(), "DimensionMismatch: rbm_train_cd1 data");
  require(epochs >= 1, "BadArgument: rbm_train_cd1 epochs must be >= 1");
  for (double v : data.data)
    require(v >= 0.0 && v <= 1.0, "BadArgument: rbm_train_cd1 inputs must lie in [0, 1]");

  Rng rng(derive_seed(seed, 0xcd1u));
  Vec errors;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    auto perm = rng.permutation(data.rows);
    for (std::size_t t = 0; t < perm.size(); ++t) {
      Vec v0 = data.row_vec(perm[t]);
      Vec ph0 = rbm_hidden_prob(r, v0);
      Vec h0(ph0.size());
      for (std::size_t j = 0; j < h0.size(); ++j) h0[j] = rng.bernoulli(ph0[j]) ? 1.0 : 0.0;
      Vec v1 = rbm_visible_prob(r, h0);
      Vec ph1 = rbm_hidden_prob(r, v1);

      for (std::size_t i = 0; i < r.visible(); ++i) {
        double* wrow = r.w.row(i);
        for (std::size_t j = 0; j < r.hidden(); ++j)
          wrow[j] += lr * (v0[i] * ph0[j] - v1[i] * ph1[j]);
        r.a[i] += lr * (v0[i] - v1[i]);
      }
      for (std::size_t j = 0; j < r.hidden(); ++j) r.b[j] += lr * (ph0[j] - ph1[j]);
    }
    errors.push_back(rbm_reconstruction_error(r, data));
  }
  return errors;
}

/// Stacked CD-1 pretraining: RBM1 on the histograms (K -> ceil(K/2)), RBM2 on
/// RBM1's hidden probabilities (ceil(K/2) -> ceil(K/3)). Encoder layers copy
/// the RBM weights and hidden biases; decoder layers take the transposed
/// weights with the visible biases. A VAE's logvar head starts at zero.
inline Autoencoder init_from_rbms(ModelKind kind, const Matrix& histograms, int epochs,
                                  double lr, std::uint64_t seed) {
  require(histograms.rows > 0, "EmptyDataset: init_from_rbms");
  const int K = static_cast<int>(histograms.cols);
  const int hid = ceil_div(K, 2);
  const int lat = ceil_div(K, 3);

  RbmModel rbm1 = make_rbm(K, hid, derive_seed(seed, 1));
  rbm_train_cd1(rbm1, histograms, epochs, lr, derive_seed(seed, 2));

  Matrix h1(histograms.rows, static_cast<std::size_t>(hid));
  for (std::size_t i = 0; i < histograms.rows; ++i)
    h1.set_row(i, rbm_hidden_prob(rbm1, histograms.row_vec(i)));

  RbmModel rbm2 = make_rbm(hid, lat, derive_seed(seed, 3));
  rbm_train_cd1(rbm2, h1, epochs, lr, derive_seed(seed, 4));

  Autoencoder m = make_autoencoder_dims(kind, K, hid, lat, derive_seed(seed, 5));
  auto transpose = [](const Matrix& w) {
    Matrix t(w.cols, w.rows);
    for (std::size_t i = 0; i < w.rows; ++i)
      for (std::size_t j = 0; j < w.cols; ++j) t(j, i) = w(i, j);
    return t;
  };

  m.net.layers[0].w = rbm1.w;
  m.net.layers[0].b = rbm1.b;
  if (kind == ModelKind::Vae) {
    m.net.layers[1].w = rbm2.w;
    m.net.layers[1].b = rbm2.b;
    std::fill(m.net.layers[2].w.data.begin(), m.net.layers[2].w.data.end(), 0.0);
    std::fill(m.net.layers[2].b.begin(), m.net.layers[2].b.end(), 0.0);
    m.net.layers[3].w = transpose(rbm2.w);
    m.net.layers[3].b = rbm2.a;
    m.net.layers[4].w = transpose(rbm1.w);
    m.net.layers[4].b = rbm1.a;
  } else {
    m.net.layers[1].w = rbm2.w;
    m.net.layers[1].b = rbm2.b;
    m.net.layers[2].w = transpose(rbm2.w);
    m.net.layers[2].b = rbm2.a;
    m.net.layers[3].w = transpose(rbm1.w);
    m.net.layers[3].b = rbm1.a;
  }
  return m;
}

// ============================================================
// weight snapshots
// ============================================================

/// Binary snapshot: "FMDW" magic, format version, layer count, then per layer
/// the two dims followed by row-major weights and biases as doubles.
inline void save_weights(const NetworkWeights& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("FileWriteError: " + path);
  const char magic[4] = {'F', 'M', 'D', 'W'};
  out.write(magic, 4);
  std::uint32_t version = 1, n_layers = static_cast<std::uint32_t>(net.layers.size());
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&n_layers), sizeof(n_layers));
  for (const auto& l : net.layers) {
    std::uint32_t in = static_cast<std::uint32_t>(l.fan_in());
    std::uint32_t outn = static_cast<std::uint32_t>(l.fan_out());
    out.write(reinterpret_cast<const char*>(&in), sizeof(in));
    out.write(reinterpret_cast<const char*>(&outn), sizeof(outn));
    out.write(reinterpret_cast<const char*>(l.w.data.data()),
              static_cast<std::streamsize>(l.w.data.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(l.b.data()),
              static_cast<std::streamsize>(l.b.size() * sizeof(double)));
  }
  if (!out) fail("FileWriteError: " + path);
}

inline NetworkWeights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("FileNotFound: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || magic[0] != 'F' || magic[1] != 'M' || magic[2] != 'D' || magic[3] != 'W')
    fail("MalformedSnapshot: bad magic in " + path);
  std::uint32_t version = 0, n_layers = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&n_layers), sizeof(n_layers));
  if (!in || version != 1) fail("MalformedSnapshot: unsupported version in " + path);
  NetworkWeights net;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    std::uint32_t fan_in = 0, fan_out = 0;
    in.read(reinterpret_cast<char*>(&fan_in), sizeof(fan_in));
    in.read(reinterpret_cast<char*>(&fan_out), sizeof(fan_out));
    if (!in) fail("MalformedSnapshot: truncated header in " + path);
    DenseLayer layer;
    layer.w = Matrix(fan_in, fan_out);
    layer.b.assign(fan_out, 0.0);
    in.read(reinterpret_cast<char*>(layer.w.data.data()),
            static_cast<std::streamsize>(layer.w.data.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(layer.b.data()),
            static_cast<std::streamsize>(layer.b.size() * sizeof(double)));
    if (!in) fail("MalformedSnapshot: truncated payload in " + path);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

}  // namespace fedmd

#endif  // FEDMD_NEURAL_HPP
