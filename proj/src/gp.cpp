#include "ddvae/gp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <stdexcept>

namespace ddvae {

double rbf_kernel(const Point &a, const Point &b, double sigma_gp) {
  if (!(sigma_gp > 0.0)) throw std::invalid_argument("rbf_kernel: scale must be positive");
  const double d1 = a.s1 - b.s1, d2 = a.s2 - b.s2;
  return std::exp(-(d1 * d1 + d2 * d2) / (2.0 * sigma_gp * sigma_gp));
}

namespace {

Eigen::MatrixXd gram(const std::vector<Point> &x, double scale, double noise_var) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    k(j, j) = 1.0 + noise_var;
    for (Eigen::Index i = j + 1; i < n; ++i)
      k(i, j) = k(j, i) =
          rbf_kernel(x[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(j)], scale);
  }
  return k;
}

// Cholesky of k, shifting the diagonal by growing jitter on failure.
Eigen::LLT<Eigen::MatrixXd> robust_llt(Eigen::MatrixXd k, double &jitter) {
  jitter = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  double shift = 1e-12;
  while (llt.info() != Eigen::Success) {
    if (shift > 1e-4) throw std::runtime_error("gp: covariance factorization failed");
    k.diagonal().array() += shift - jitter;
    jitter = shift;
    llt.compute(k);
    shift *= 10.0;
  }
  return llt;
}

}  // namespace

GpInterfaceModel fit_gp(const std::vector<Point> &locations, const Eigen::VectorXd &values,
                        double kernel_scale, double noise_var) {
  if (locations.empty()) throw std::invalid_argument("fit_gp: no training points");
  if (static_cast<std::size_t>(values.size()) != locations.size())
    throw std::invalid_argument("fit_gp: value count does not match locations");
  if (noise_var < 0.0) throw std::invalid_argument("fit_gp: negative noise variance");
  GpInterfaceModel m;
  m.train_locations = locations;
  m.train_values = values;
  m.kernel_scale = kernel_scale;
  m.noise_var = noise_var;
  m.factor = robust_llt(gram(locations, kernel_scale, noise_var), m.jitter);
  m.weights = m.factor.solve(values);
  return m;
}

GpPrediction gp_posterior(const GpInterfaceModel &model, const std::vector<Point> &queries) {
  const auto n = static_cast<Eigen::Index>(model.size());
  const auto q = static_cast<Eigen::Index>(queries.size());
  Eigen::MatrixXd ks(n, q);
  for (Eigen::Index c = 0; c < q; ++c)
    for (Eigen::Index r = 0; r < n; ++r)
      ks(r, c) = rbf_kernel(model.train_locations[static_cast<std::size_t>(r)],
                            queries[static_cast<std::size_t>(c)], model.kernel_scale);
  GpPrediction out;
  out.mean = ks.transpose() * model.weights;
  const Eigen::MatrixXd v = model.factor.matrixL().solve(ks);
  out.variance = (1.0 - v.colwise().squaredNorm().array()).matrix().transpose();
  for (Eigen::Index c = 0; c < q; ++c)
    if (out.variance[c] < 0.0) {
      out.max_clamp = std::max(out.max_clamp, -out.variance[c]);
      out.variance[c] = 0.0;
    }
  return out;
}

double log_marginal_likelihood(const std::vector<Point> &locations, const Eigen::VectorXd &values,
                               double kernel_scale, double noise_var) {
  double jitter = 0.0;
  const auto llt = robust_llt(gram(locations, kernel_scale, noise_var), jitter);
  const Eigen::VectorXd alpha = llt.solve(values);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double n = static_cast<double>(values.size());
  return -0.5 * values.dot(alpha) - 0.5 * logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

double fit_hyperparameter(const std::vector<Point> &locations, const Eigen::VectorXd &values,
                          double noise_var, const HyperparameterOptions &opts) {
  if (locations.empty()) throw std::invalid_argument("fit_hyperparameter: no training points");
  if (opts.grid_points < 3 || !(opts.scale_min > 0.0) || !(opts.scale_max > opts.scale_min))
    throw std::invalid_argument("fit_hyperparameter: invalid search grid");

  const double lo = std::log(opts.scale_min), hi = std::log(opts.scale_max);
  const std::size_t g = opts.grid_points;
  auto objective = [&](double log_scale) {
    const double v = log_marginal_likelihood(locations, values, std::exp(log_scale), noise_var);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  };
  std::vector<double> grid(g), score(g);
  for (std::size_t k = 0; k < g; ++k) {
    grid[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(g - 1);
    score[k] = objective(grid[k]);
  }
  const auto [mn, mx] = std::minmax_element(score.begin(), score.end());
  if (!std::isfinite(*mx) || *mx - *mn <= 1e-12 * (1.0 + std::abs(*mx)))
    return opts.fallback_scale;

  const std::size_t best = static_cast<std::size_t>(mx - score.begin());
  double a = grid[best == 0 ? 0 : best - 1];
  double b = grid[std::min(best + 1, g - 1)];
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = objective(c), fd = objective(d);
  for (std::size_t it = 0; it < opts.golden_iterations; ++it) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = objective(d);
    }
  }
  double x = fc >= fd ? c : d;
  double fx = std::max(fc, fd);
  if (score[best] > fx) x = grid[best];
  return std::exp(x);
}

std::size_t AcquisitionTrace::acquisitions() const {
  return static_cast<std::size_t>(
      std::count_if(steps.begin(), steps.end(), [](const auto &s) { return s.has_sensor; }));
}

AdaptiveResult adaptive_fit(const ObservationSet &sensors, const std::vector<Point> &test_set,
                            const AdaptiveOptions &opts) {
  if (sensors.size() == 0) throw std::invalid_argument("adaptive_fit: no candidate sensors");
  if (test_set.empty()) throw std::invalid_argument("adaptive_fit: empty test set");

  double s1_lo = test_set.front().s1, s1_hi = s1_lo;
  double s2_lo = test_set.front().s2, s2_hi = s2_lo;
  for (const auto &p : test_set) {
    s1_lo = std::min(s1_lo, p.s1);
    s1_hi = std::max(s1_hi, p.s1);
    s2_lo = std::min(s2_lo, p.s2);
    s2_hi = std::max(s2_hi, p.s2);
  }
  const Point centre{0.5 * (s1_lo + s1_hi), 0.5 * (s2_lo + s2_hi)};

  std::vector<char> used(sensors.size(), 0);
  // Nearest unused sensor to p; lexicographic (s1, s2) on distance ties.
  auto nearest_unused = [&](const Point &p) -> std::ptrdiff_t {
    std::ptrdiff_t best = -1;
    double bd = 0.0;
    for (std::size_t k = 0; k < sensors.size(); ++k) {
      if (used[k]) continue;
      const Point &l = sensors.sensors[k].location;
      const double d = distance(l, p);
      if (best < 0 || d < bd) {
        best = static_cast<std::ptrdiff_t>(k);
        bd = d;
      } else if (d == bd) {
        const Point &o = sensors.sensors[static_cast<std::size_t>(best)].location;
        if (l.s1 < o.s1 || (l.s1 == o.s1 && l.s2 < o.s2)) best = static_cast<std::ptrdiff_t>(k);
      }
    }
    return best;
  };

  std::vector<Point> locs;
  std::vector<double> vals;
  auto take = [&](std::size_t k) {
    used[k] = 1;
    locs.push_back(sensors.sensors[k].location);
    vals.push_back(sensors.values[static_cast<Eigen::Index>(k)]);
  };
  take(static_cast<std::size_t>(nearest_unused(centre)));

  AdaptiveResult out;
  for (std::size_t iter = 0;; ++iter) {
    const Eigen::Map<const Eigen::VectorXd> d(vals.data(), static_cast<Eigen::Index>(vals.size()));
    const double scale = fit_hyperparameter(locs, d, opts.noise_var, opts.hyper);
    out.model = fit_gp(locs, d, scale, opts.noise_var);
    const GpPrediction pred = gp_posterior(out.model, test_set);
    Eigen::Index arg = 0;
    const double vmax = pred.variance.maxCoeff(&arg);

    AcquisitionStep step;
    step.iteration = iter;
    step.train_size = locs.size();
    step.test_point = test_set[static_cast<std::size_t>(arg)];
    step.max_variance = vmax;
    step.kernel_scale = scale;
    if (vmax < opts.delta_tol) {
      out.trace.converged = true;
      out.trace.steps.push_back(step);
      break;
    }
    if (iter >= opts.max_acquisitions) {
      out.trace.steps.push_back(step);
      break;
    }
    const auto next = nearest_unused(step.test_point);
    if (next < 0) {
      out.trace.exhausted = true;
      out.trace.steps.push_back(step);
      break;
    }
    step.has_sensor = true;
    step.sensor = sensors.sensors[static_cast<std::size_t>(next)].location;
    out.trace.steps.push_back(step);
    take(static_cast<std::size_t>(next));
  }
  return out;
}

Eigen::VectorXd interface_values(const GpInterfaceModel &model, const std::vector<Point> &nodes) {
  return gp_posterior(model, nodes).mean;
}

void save_acquisition_csv(const std::filesystem::path &path, const AcquisitionTrace &trace) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_acquisition_csv: cannot open " + path.string());
  os << "iteration,train_size,test_s1,test_s2,sensor_s1,sensor_s2,max_variance,kernel_scale\n";
  os << std::setprecision(17);
  for (const auto &s : trace.steps) {
    os << s.iteration << ',' << s.train_size << ',' << s.test_point.s1 << ',' << s.test_point.s2
       << ',';
    if (s.has_sensor)
      os << s.sensor.s1 << ',' << s.sensor.s2;
    else
      os << ',';
    os << ',' << s.max_variance << ',' << s.kernel_scale << '\n';
  }
}

}  // namespace ddvae
