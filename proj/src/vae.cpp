#include "ddvae/vae.hpp"

#include "ddvae/field_io.hpp"
#include "ddvae/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace ddvae {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mlp build_mlp(Eigen::Index in, const std::vector<Eigen::Index> &hidden, Eigen::Index out,
              bool last_activated, Eigen::Index &offset) {
  Mlp mlp;
  Eigen::Index prev = in;
  auto push = [&](Eigen::Index width, bool act) {
    DenseLayer l{prev, width, offset, act};
    offset += l.size();
    mlp.layers.push_back(l);
    prev = width;
  };
  for (auto w : hidden) push(w, true);
  if (out > 0) push(out, last_activated);
  return mlp;
}

void check_arch(const VaeArchitecture &a) {
  if (a.input_dim < 1 || a.latent_dim < 1)
    throw std::invalid_argument("vae: input and latent dimensions must be positive");
  if (a.encoder_hidden.empty())
    throw std::invalid_argument("vae: encoder needs at least one hidden layer");
  for (auto w : a.encoder_hidden)
    if (w < 1) throw std::invalid_argument("vae: hidden widths must be positive");
  for (auto w : a.decoder_hidden)
    if (w < 1) throw std::invalid_argument("vae: hidden widths must be positive");
}

void layout(VaeModel &m) {
  check_arch(m.arch);
  Eigen::Index off = 0;
  m.encoder = build_mlp(m.arch.input_dim, m.arch.encoder_hidden, 0, true, off);
  const Eigen::Index h = m.arch.encoder_hidden.back();
  m.mu_head = {h, m.arch.latent_dim, off, false};
  off += m.mu_head.size();
  m.logvar_head = {h, m.arch.latent_dim, off, false};
  off += m.logvar_head.size();
  m.decoder = build_mlp(m.arch.latent_dim, m.arch.decoder_hidden, m.arch.input_dim, false, off);
  m.params = Vec::Zero(off);
}

Eigen::Map<const Mat> weights(const Vec &p, const DenseLayer &l) {
  return {p.data() + l.offset, l.out, l.in};
}
Eigen::Map<Mat> weights(Vec &p, const DenseLayer &l) { return {p.data() + l.offset, l.out, l.in}; }
Eigen::Map<const Vec> bias(const Vec &p, const DenseLayer &l) {
  return {p.data() + l.bias_offset(), l.out};
}
Eigen::Map<Vec> bias(Vec &p, const DenseLayer &l) { return {p.data() + l.bias_offset(), l.out}; }

Mat affine(const Vec &p, const DenseLayer &l, const Mat &x) {
  Mat z = weights(p, l) * x;
  z.colwise() += bias(p, l);
  return z;
}

void leaky(Mat &z, double slope) {
  z = z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

// Forward activations of an MLP; acts[0] is the input, acts[k] the output of layer k-1.
std::vector<Mat> forward_mlp(const Vec &p, const Mlp &mlp, const Mat &x, double slope) {
  std::vector<Mat> acts;
  acts.reserve(mlp.layers.size() + 1);
  acts.push_back(x);
  for (const auto &l : mlp.layers) {
    Mat z = affine(p, l, acts.back());
    if (l.activated) leaky(z, slope);
    acts.push_back(std::move(z));
  }
  return acts;
}

// Back-propagates d(loss)/d(output) through the MLP, accumulating parameter
// gradients; returns d(loss)/d(input).
Mat backward_mlp(const Vec &p, const Mlp &mlp, const std::vector<Mat> &acts, Mat delta,
                 double slope, Vec &grad) {
  for (std::size_t k = mlp.layers.size(); k-- > 0;) {
    const auto &l = mlp.layers[k];
    if (l.activated) {
      const Mat &a = acts[k + 1];
      delta = delta.cwiseProduct(a.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; }));
    }
    weights(grad, l).noalias() += delta * acts[k].transpose();
    bias(grad, l) += delta.rowwise().sum();
    delta = weights(p, l).transpose() * delta;
  }
  return delta;
}

Mat standardized(const VaeModel &m, const Mat &x) {
  if (m.data_shift == 0.0 && m.data_scale == 1.0) return x;
  return (x.array() - m.data_shift) / m.data_scale;
}

BatchResult elbo_chunk(const VaeModel &model, const Mat &batch, const Mat &eps) {
  const double slope = model.arch.leaky_slope;
  const Vec &p = model.params;
  const Mat x = standardized(model, batch);

  const auto enc = forward_mlp(p, model.encoder, x, slope);
  const Mat &h = enc.back();
  const Mat mu = affine(p, model.mu_head, h);
  const Mat lv_raw = affine(p, model.logvar_head, h);
  const Mat lv = lv_raw.cwiseMax(kLogvarMin).cwiseMin(kLogvarMax);
  const Mat sigma = (0.5 * lv.array()).exp().matrix();
  const Mat alpha = mu + sigma.cwiseProduct(eps);

  const auto dec = forward_mlp(p, model.decoder, alpha, slope);
  const Mat resid = dec.back() - x;

  BatchResult out;
  const double kl = 0.5 * (1.0 + lv.array() - mu.array().square() - lv.array().exp()).sum();
  out.loss = resid.squaredNorm() - kl;
  out.grad = Vec::Zero(p.size());

  const Mat g_alpha = backward_mlp(p, model.decoder, dec, 2.0 * resid, slope, out.grad);
  const Mat d_mu = g_alpha + mu;
  Mat d_lv = (0.5 * g_alpha.cwiseProduct(eps).cwiseProduct(sigma).array() +
              0.5 * (lv.array().exp() - 1.0))
                 .matrix();
  for (Eigen::Index c = 0; c < d_lv.cols(); ++c)
    for (Eigen::Index r = 0; r < d_lv.rows(); ++r)
      if (lv_raw(r, c) < kLogvarMin || lv_raw(r, c) > kLogvarMax) d_lv(r, c) = 0.0;

  weights(out.grad, model.mu_head).noalias() += d_mu * h.transpose();
  bias(out.grad, model.mu_head) += d_mu.rowwise().sum();
  weights(out.grad, model.logvar_head).noalias() += d_lv * h.transpose();
  bias(out.grad, model.logvar_head) += d_lv.rowwise().sum();
  Mat d_h = weights(p, model.mu_head).transpose() * d_mu;
  d_h.noalias() += weights(p, model.logvar_head).transpose() * d_lv;
  backward_mlp(p, model.encoder, enc, std::move(d_h), slope, out.grad);
  return out;
}

constexpr Eigen::Index kChunk = 16;

}  // namespace

VaeModel make_vae(const VaeArchitecture &arch, std::uint64_t seed) {
  VaeModel m;
  m.arch = arch;
  layout(m);
  Rng rng(seed, 0x5641);
  auto init = [&](const DenseLayer &l) {
    const double a = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    auto w = weights(m.params, l);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-a, a);
  };
  for (const auto &l : m.encoder.layers) init(l);
  init(m.mu_head);
  init(m.logvar_head);
  for (const auto &l : m.decoder.layers) init(l);
  return m;
}

Eigen::Map<const Eigen::MatrixXd> layer_weights(const VaeModel &m, const DenseLayer &l) {
  return weights(m.params, l);
}
Eigen::Map<Eigen::MatrixXd> layer_weights(VaeModel &m, const DenseLayer &l) {
  return weights(m.params, l);
}
Eigen::Map<const Eigen::VectorXd> layer_bias(const VaeModel &m, const DenseLayer &l) {
  return bias(m.params, l);
}
Eigen::Map<Eigen::VectorXd> layer_bias(VaeModel &m, const DenseLayer &l) {
  return bias(m.params, l);
}

Encoding encode(const VaeModel &model, const Eigen::VectorXd &x) {
  if (x.size() != model.input_dim())
    throw std::invalid_argument("encode: input has length " + std::to_string(x.size()) +
                                ", expected " + std::to_string(model.input_dim()));
  const auto acts = forward_mlp(model.params, model.encoder, standardized(model, x),
                                model.arch.leaky_slope);
  Encoding e;
  e.mu = affine(model.params, model.mu_head, acts.back());
  e.logvar = affine(model.params, model.logvar_head, acts.back())
                 .cwiseMax(kLogvarMin)
                 .cwiseMin(kLogvarMax);
  return e;
}

Eigen::VectorXd reparameterize(const Eigen::VectorXd &mu, const Eigen::VectorXd &logvar,
                               const Eigen::VectorXd &eps) {
  if (mu.size() != logvar.size() || mu.size() != eps.size())
    throw std::invalid_argument("reparameterize: length mismatch");
  return mu + ((0.5 * logvar.array()).exp() * eps.array()).matrix();
}

double kl_term(const Eigen::VectorXd &mu, const Eigen::VectorXd &logvar) {
  if (mu.size() != logvar.size()) throw std::invalid_argument("kl_term: length mismatch");
  return 0.5 * (1.0 + logvar.array() - mu.array().square() - logvar.array().exp()).sum();
}

BatchResult elbo_batch(const VaeModel &model, const Eigen::MatrixXd &batch,
                       const Eigen::MatrixXd &eps, Exec exec) {
  if (batch.rows() != model.input_dim())
    throw std::invalid_argument("elbo_batch: sample length does not match the model input");
  if (eps.rows() != model.latent_dim() || eps.cols() != batch.cols())
    throw std::invalid_argument("elbo_batch: need one latent noise column per sample");
  if (batch.cols() == 0) return {0.0, Vec::Zero(model.parameter_count())};
  if (exec == Exec::serial) return elbo_chunk(model, batch, eps);

  const Eigen::Index n = batch.cols();
  const Eigen::Index chunks = (n + kChunk - 1) / kChunk;
  std::vector<BatchResult> parts(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index lo = c * kChunk, w = std::min(kChunk, n - lo);
    parts[static_cast<std::size_t>(c)] =
        elbo_chunk(model, batch.middleCols(lo, w), eps.middleCols(lo, w));
  }
  BatchResult out = std::move(parts.front());
  for (std::size_t c = 1; c < parts.size(); ++c) {
    out.loss += parts[c].loss;
    out.grad += parts[c].grad;
  }
  return out;
}

void adam_step(Eigen::VectorXd &params, const Eigen::VectorXd &grads, AdamState &state,
               const TrainConfig &config) {
  if (grads.size() != params.size()) throw std::invalid_argument("adam_step: shape mismatch");
  if (state.m.size() != params.size()) {
    state.m = Vec::Zero(params.size());
    state.v = Vec::Zero(params.size());
    state.t = 0;
  }
  ++state.t;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  state.m = b1 * state.m + (1.0 - b1) * grads;
  state.v = b2 * state.v + (1.0 - b2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  params.array() -= config.learning_rate * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + config.adam_eps);
}

TrainHistory train(VaeModel &model, const Eigen::MatrixXd &data, const TrainConfig &config) {
  const auto n = static_cast<std::size_t>(data.cols());
  if (n == 0) throw std::invalid_argument("train: empty dataset");
  if (data.rows() != model.input_dim())
    throw std::invalid_argument("train: data rows do not match the model input dimension");
  if (config.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (config.batch_size < 1 || config.batch_size > n)
    throw std::invalid_argument("train: batch size must lie in [1, dataset size]");

  if (config.standardize) {
    model.data_shift = data.mean();
    const double var = (data.array() - model.data_shift).square().mean();
    model.data_scale = var > 0.0 ? std::sqrt(var) : 1.0;
  }

  Rng rng(config.seed, 0x7472);
  AdamState adam;
  TrainHistory hist;
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto latent = model.latent_dim();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t b = std::min(config.batch_size, n - start);
      Mat batch(data.rows(), static_cast<Eigen::Index>(b));
      for (std::size_t k = 0; k < b; ++k)
        batch.col(static_cast<Eigen::Index>(k)) = data.col(order[start + k]);
      Mat eps(latent, static_cast<Eigen::Index>(b));
      rng.fill_normal(eps);
      BatchResult r = elbo_batch(model, batch, eps, config.exec);
      if (!std::isfinite(r.loss) || !r.grad.allFinite())
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch starting at " + std::to_string(start));
      total += r.loss;
      adam_step(model.params, r.grad, adam, config);
    }
    hist.epoch_loss.push_back(total / static_cast<double>(n));
  }
  return hist;
}

Eigen::VectorXd generate(const VaeModel &model, const Eigen::VectorXd &latent) {
  if (latent.size() != model.latent_dim())
    throw std::invalid_argument("generate: latent has length " + std::to_string(latent.size()) +
                                ", expected " + std::to_string(model.latent_dim()));
  auto acts = forward_mlp(model.params, model.decoder, latent, model.arch.leaky_slope);
  Vec y = acts.back();
  if (model.data_shift != 0.0 || model.data_scale != 1.0)
    y = (y.array() * model.data_scale + model.data_shift).matrix();
  return y;
}

void save_vae(const std::filesystem::path &path, const VaeModel &model,
              const std::string &extra_json) {
  nlohmann::json h;
  h["format"] = "ddvae-vae";
  h["input_dim"] = model.arch.input_dim;
  h["latent_dim"] = model.arch.latent_dim;
  h["encoder_hidden"] = model.arch.encoder_hidden;
  h["decoder_hidden"] = model.arch.decoder_hidden;
  h["hidden_activation"] = "leaky_relu";
  h["output_activation"] = "linear";
  h["leaky_slope"] = model.arch.leaky_slope;
  h["data_shift"] = model.data_shift;
  h["data_scale"] = model.data_scale;
  h["parameter_count"] = model.params.size();
  h["extra"] = nlohmann::json::parse(extra_json);
  const std::string header = h.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_vae: cannot open " + path.string());
  os.write("VAE1", 4);
  detail::write_u64(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (Eigen::Index k = 0; k < model.params.size(); ++k) detail::write_f64(os, model.params[k]);
  if (!os) throw std::runtime_error("save_vae: write failed for " + path.string());
}

VaeModel load_vae(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_vae: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "VAE1")
    throw std::runtime_error("load_vae: bad magic in " + path.string());
  const auto len = detail::read_u64(is);
  if (len > (1u << 24)) throw std::runtime_error("load_vae: implausible header length");
  std::string header(len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(len));
  const auto h = nlohmann::json::parse(header);

  VaeModel m;
  m.arch.input_dim = h.at("input_dim").get<Eigen::Index>();
  m.arch.latent_dim = h.at("latent_dim").get<Eigen::Index>();
  m.arch.encoder_hidden = h.at("encoder_hidden").get<std::vector<Eigen::Index>>();
  m.arch.decoder_hidden = h.at("decoder_hidden").get<std::vector<Eigen::Index>>();
  m.arch.leaky_slope = h.at("leaky_slope").get<double>();
  layout(m);
  m.data_shift = h.at("data_shift").get<double>();
  m.data_scale = h.at("data_scale").get<double>();
  if (h.at("parameter_count").get<Eigen::Index>() != m.params.size())
    throw std::runtime_error("load_vae: parameter count does not match the architecture");
  for (Eigen::Index k = 0; k < m.params.size(); ++k) m.params[k] = detail::read_f64(is);
  if (!is) throw std::runtime_error("load_vae: truncated parameter blob in " + path.string());
  return m;
}

}  // namespace ddvae
