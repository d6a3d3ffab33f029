#include "ddvae/random_field.hpp"

#include "ddvae/field_io.hpp"
#include "ddvae/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ddvae {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

double exp_covariance(const Point &a, const Point &b, double sigma_f, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("exp_covariance: tau must be positive");
  return sigma_f * sigma_f * std::exp(-distance(a, b) / tau);
}

Eigen::MatrixXd weighted_covariance(const Grid &grid, double sigma_f, double tau,
                                    Exec exec) {
  if (!(tau > 0.0)) throw std::invalid_argument("weighted_covariance: tau must be positive");
  const auto n = static_cast<Eigen::Index>(grid.size());
  const Eigen::VectorXd sw = grid.quadrature_weights().cwiseSqrt();
  std::vector<Point> pts(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) pts[k] = grid.location(k);
  const double var = sigma_f * sigma_f;
  Eigen::MatrixXd a(n, n);
  // Column q is filled from rows p >= q, then mirrored; each entry is written
  // by exactly one iteration so both paths are bit-identical.
  const auto fill_column = [&](Eigen::Index q) {
    for (Eigen::Index p = q; p < n; ++p) {
      const double v = sw[p] * sw[q] * var *
                       std::exp(-distance(pts[static_cast<std::size_t>(p)],
                                          pts[static_cast<std::size_t>(q)]) / tau);
      a(p, q) = v;
    }
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (Eigen::Index q = 0; q < n; ++q) fill_column(q);
  } else {
    for (Eigen::Index q = 0; q < n; ++q) fill_column(q);
  }
  a.triangularView<Eigen::StrictlyUpper>() = a.transpose().triangularView<Eigen::StrictlyUpper>();
  return a;
}

namespace {

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd &z) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
  return qr.householderQ() * Eigen::MatrixXd::Identity(z.rows(), z.cols());
}

// Smallest count whose prefix sum reaches `target`, or -1.
Eigen::Index truncation_count(const Eigen::VectorXd &desc, double target) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < desc.size(); ++k) {
    acc += desc[k];
    if (acc >= target) return k + 1;
  }
  return -1;
}

EigenPairs dense_leading(const Eigen::MatrixXd &a, double trace, double energy_frac) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("kl_decompose: dense eigensolver failed");
  const Eigen::Index n = a.rows();
  // Reverse to non-increasing order; equal eigenvalues keep solver index order.
  Eigen::VectorXd vals = es.eigenvalues().reverse();
  const Eigen::Index k = truncation_count(vals, energy_frac * trace);
  if (k < 0) throw std::runtime_error("kl_decompose: energy target not reachable");
  EigenPairs out;
  out.values = vals.head(k);
  out.vectors = es.eigenvectors().rowwise().reverse().leftCols(k);
  (void)n;
  return out;
}

}  // namespace

EigenPairs leading_eigenpairs(const Eigen::MatrixXd &a, double trace, double energy_frac,
                              const KLOptions &opts) {
  const Eigen::Index n = a.rows();
  if (static_cast<std::size_t>(n) <= opts.dense_limit) return dense_leading(a, trace, energy_frac);

  // Block subspace iteration with Rayleigh-Ritz; the block grows until the
  // energy target sits well inside it.
  Rng rng(opts.seed, static_cast<std::uint64_t>(n));
  Eigen::Index b = std::min<Eigen::Index>(n, 48);
  Eigen::MatrixXd start(n, b);
  rng.fill_normal(start);
  Eigen::MatrixXd q = orthonormalize(start);
  const double target = energy_frac * trace;

  for (int iter = 0; iter < 2000; ++iter) {
    const Eigen::MatrixXd z = a * q;
    Eigen::MatrixXd h = q.transpose() * z;
    h = 0.5 * (h + h.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("kl_decompose: Rayleigh-Ritz eigensolver failed");
    const Eigen::VectorXd theta = es.eigenvalues().reverse();
    const Eigen::MatrixXd v = es.eigenvectors().rowwise().reverse();
    const Eigen::MatrixXd x = q * v;
    const Eigen::MatrixXd ax = z * v;

    const Eigen::Index k = truncation_count(theta, target);
    const Eigen::Index guard = std::max<Eigen::Index>(16, b / 4);
    if (k < 0 || k + guard > b) {
      if (2 * b > n / 2) {
        // Subspace would be a large fraction of the space; dense is cheaper.
        return dense_leading(a, trace, energy_frac);
      }
      Eigen::MatrixXd grown(n, 2 * b);
      grown.leftCols(b) = ax;
      Eigen::MatrixXd extra(n, b);
      rng.fill_normal(extra);
      grown.rightCols(b) = extra;
      b *= 2;
      q = orthonormalize(grown);
      continue;
    }
    // Converged when the first k+1 Ritz pairs have small residuals.
    const Eigen::Index check = std::min<Eigen::Index>(k + 1, b);
    double worst = 0.0;
    for (Eigen::Index c = 0; c < check; ++c)
      worst = std::max(worst, (ax.col(c) - theta[c] * x.col(c)).norm());
    if (worst <= opts.residual_tol * theta[0]) {
      EigenPairs out;
      out.values = theta.head(k);
      out.vectors = x.leftCols(k);
      return out;
    }
    q = orthonormalize(ax);
  }
  throw std::runtime_error("kl_decompose: subspace iteration did not converge");
}

KLBasis kl_decompose(const Grid &grid, double sigma_f, double tau, double energy_frac,
                     double mean, const KLOptions &opts) {
  if (grid.size() > opts.max_nodes)
    throw std::invalid_argument("kl_decompose: grid has more nodes than the dense guard allows");
  if (!(energy_frac > 0.0 && energy_frac < 1.0))
    throw std::invalid_argument("kl_decompose: energy_frac must lie in (0, 1)");
  if (!(tau > 0.0)) throw std::invalid_argument("kl_decompose: tau must be positive");
  if (!(sigma_f > 0.0)) throw std::invalid_argument("kl_decompose: sigma_f must be positive");

  const Eigen::MatrixXd a = weighted_covariance(grid, sigma_f, tau);
  const double trace = a.trace();
  EigenPairs pairs = leading_eigenpairs(a, trace, energy_frac, opts);
  if ((pairs.values.array() <= 0.0).any())
    throw std::runtime_error("kl_decompose: non-positive retained eigenvalue");

  KLBasis basis;
  basis.grid = grid;
  basis.mean = mean;
  basis.sigma_f = sigma_f;
  basis.tau = tau;
  basis.energy_frac = energy_frac;
  basis.total_variance = trace;
  basis.eigenvalues = std::move(pairs.values);
  // psi = W^{-1/2} phi is orthonormal under sum_p w_p psi(p) psi'(p).
  const Eigen::VectorXd inv_sw = grid.quadrature_weights().cwiseSqrt().cwiseInverse();
  basis.eigenfunctions = inv_sw.asDiagonal() * pairs.vectors;
  for (Eigen::Index c = 0; c < basis.eigenfunctions.cols(); ++c) {
    // Fix the sign so the largest-magnitude entry is positive.
    Eigen::Index arg;
    basis.eigenfunctions.col(c).cwiseAbs().maxCoeff(&arg);
    if (basis.eigenfunctions(arg, c) < 0.0) basis.eigenfunctions.col(c) *= -1.0;
  }
  return basis;
}

Field sample_field(const KLBasis &basis, const Eigen::VectorXd &kappa) {
  if (static_cast<std::size_t>(kappa.size()) != basis.n_kl())
    throw std::invalid_argument("sample_field: kappa length must equal n_kl");
  Eigen::VectorXd v = basis.eigenfunctions * (basis.eigenvalues.cwiseSqrt().cwiseProduct(kappa));
  v.array() += basis.mean;
  return Field(basis.grid, std::move(v));
}

Eigen::MatrixXd Dataset::matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t k = 0; k < samples.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = samples[k].values;
  return m;
}

double quantize_tau(double tau, const DatasetSpec &spec) {
  const double width = spec.tau_max - spec.tau_min;
  if (width <= 0.0 || spec.tau_bins <= 1) return width <= 0.0 ? spec.tau_min : 0.5 * (spec.tau_min + spec.tau_max);
  const double bins = static_cast<double>(spec.tau_bins);
  const double b = std::clamp(std::floor((tau - spec.tau_min) / width * bins), 0.0, bins - 1.0);
  return spec.tau_min + (b + 0.5) * width / bins;
}

Dataset generate_dataset(const Grid &grid, const DatasetSpec &spec, Exec exec) {
  if (spec.count < 1) throw std::invalid_argument("generate_dataset: count must be >= 1");
  if (spec.tau_max < spec.tau_min) throw std::invalid_argument("generate_dataset: empty tau range");
  Dataset ds;
  ds.grid = grid;
  ds.meta.resize(spec.count);

  // Per-sample streams: tau first, then kappa, all from (seed, sample index).
  std::vector<Rng> streams;
  streams.reserve(spec.count);
  std::map<double, std::size_t> bin_of;
  for (std::size_t k = 0; k < spec.count; ++k) {
    streams.emplace_back(spec.seed, k);
    auto &m = ds.meta[k];
    m.seed = derive_seed(spec.seed, k);
    m.tau = streams.back().uniform(spec.tau_min, spec.tau_max);
    m.tau_basis = quantize_tau(m.tau, spec);
    bin_of.emplace(m.tau_basis, bin_of.size());
  }

  std::vector<double> taus(bin_of.size());
  for (const auto &[t, b] : bin_of) taus[b] = t;
  std::vector<KLBasis> bases(taus.size());
  // Each basis build is itself a heavy dense kernel; build them one at a time.
  for (std::size_t b = 0; b < taus.size(); ++b)
    bases[b] = kl_decompose(grid, spec.sigma_f, taus[b], spec.energy_frac, spec.mean, spec.kl);

  ds.samples.resize(spec.count);
  const auto draw = [&](std::size_t k) {
    const KLBasis &basis = bases[bin_of.at(ds.meta[k].tau_basis)];
    const Eigen::VectorXd kappa = streams[k].normal_vector(static_cast<Eigen::Index>(basis.n_kl()));
    ds.samples[k] = sample_field(basis, kappa);
  };
  const auto n = static_cast<std::ptrdiff_t>(spec.count);
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < n; ++k) draw(static_cast<std::size_t>(k));
  } else {
    for (std::ptrdiff_t k = 0; k < n; ++k) draw(static_cast<std::size_t>(k));
  }
  return ds;
}

Dataset augment_dataset(const Dataset &ds, const Decomposition &dec) {
  if (!(ds.grid == dec.grid)) throw std::invalid_argument("augment_dataset: grid mismatch");
  for (const auto &sub : dec.subdomains)
    if (sub.box.nx() != dec.subdomains.front().box.nx() ||
        sub.box.ny() != dec.subdomains.front().box.ny())
      throw std::invalid_argument("augment_dataset: subdomains must share one node-box shape");
  Dataset out;
  // Local fields are placed on the first patch's grid shape; every patch has
  // the same node counts, and the VAE only sees values.
  out.grid = dec.subdomains.front().local_grid;
  out.samples.reserve(ds.size() * dec.size());
  out.meta.reserve(ds.size() * dec.size());
  for (std::size_t k = 0; k < ds.size(); ++k)
    for (const auto &sub : dec.subdomains) {
      Field local = restrict_field(ds.samples[k], sub);
      out.samples.emplace_back(out.grid, std::move(local.values));
      out.meta.push_back(ds.meta.empty() ? SampleMeta{} : ds.meta[k]);
    }
  return out;
}

namespace {
nlohmann::json grid_json(const Grid &g) {
  const Extent &e = g.extent();
  return {{"nx", g.nx()}, {"ny", g.ny()},
          {"extent", {e.s1_min, e.s1_max, e.s2_min, e.s2_max}}};
}
}  // namespace

void save_dataset(const std::filesystem::path &dir, const Dataset &ds) {
  std::filesystem::create_directories(dir);
  nlohmann::json man;
  man["grid"] = grid_json(ds.grid);
  man["count"] = ds.size();
  auto &arr = man["samples"] = nlohmann::json::array();
  for (std::size_t k = 0; k < ds.size(); ++k) {
    std::ostringstream name;
    name << "sample_" << std::setw(6) << std::setfill('0') << k << ".fld";
    save_field(dir / name.str(), ds.samples[k]);
    const SampleMeta m = k < ds.meta.size() ? ds.meta[k] : SampleMeta{};
    arr.push_back({{"file", name.str()}, {"tau", m.tau}, {"tau_basis", m.tau_basis}, {"seed", m.seed}});
  }
  std::ofstream os(dir / "manifest.json");
  os << man.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path &dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw std::runtime_error("load_dataset: missing manifest.json in " + dir.string());
  const auto man = nlohmann::json::parse(is);
  const auto &gj = man.at("grid");
  const auto ex = gj.at("extent").get<std::vector<double>>();
  Dataset ds;
  ds.grid = Grid(gj.at("nx").get<std::size_t>(), gj.at("ny").get<std::size_t>(),
                 Extent{ex.at(0), ex.at(1), ex.at(2), ex.at(3)});
  for (const auto &s : man.at("samples")) {
    Field f = load_field(dir / s.at("file").get<std::string>());
    if (!(f.grid == ds.grid)) throw std::runtime_error("load_dataset: sample grid mismatch");
    ds.samples.push_back(std::move(f));
    ds.meta.push_back({s.at("tau").get<double>(), s.at("tau_basis").get<double>(),
                       s.at("seed").get<std::uint64_t>()});
  }
  return ds;
}

}  // namespace ddvae
