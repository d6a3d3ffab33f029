#include "ddvae/pipeline.hpp"

#include "ddvae/field_io.hpp"
#include "ddvae/random_field.hpp"
#include "ddvae/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace ddvae {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Runs body(k) for k in [0, n), in parallel if requested, rethrowing the
// first failure.
template <class F> void for_each_index(std::size_t n, Exec exec, F &&body) {
  if (exec == Exec::serial) {
    for (std::size_t k = 0; k < n; ++k) body(k);
    return;
  }
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n); ++k) {
    try {
      body(static_cast<std::size_t>(k));
    } catch (...) {
#pragma omp critical(ddvae_for_each)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

std::vector<Sensor> local_sensors_of(const Problem &p, int k, const ObservationSet &local) {
  return localize_sensors(local.sensors, p.dec.sub(k), p.grid);
}

}  // namespace

Problem make_problem(const ExperimentConfig &config) {
  config.validate();
  Problem p;
  p.config = config;
  p.grid = build_grid(config.nx, config.ny, config.extent);
  p.dec = decompose(p.grid, config.cuts);
  p.bcs = darcy_boundary(p.grid, config.dirichlet_abscissae);
  p.source = gaussian_source(config.source_center);
  p.solve.solver = config.solver;
  return p;
}

PosteriorStats posterior_stats(const std::vector<Field> &samples) {
  if (samples.empty()) throw std::invalid_argument("posterior_stats: no samples");
  const Grid &g = samples.front().grid;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(g.size()));
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (!(samples[k].grid == g)) throw std::invalid_argument("posterior_stats: samples on different grids");
    m.row(static_cast<Eigen::Index>(k)) = samples[k].values.transpose();
  }
  return posterior_stats(g, m);
}

PosteriorStats posterior_stats(const Grid &grid, const Eigen::MatrixXd &samples) {
  if (samples.rows() == 0) throw std::invalid_argument("posterior_stats: no samples");
  if (static_cast<std::size_t>(samples.cols()) != grid.size())
    throw std::invalid_argument("posterior_stats: sample length does not match the grid");
  const Eigen::VectorXd mean = samples.colwise().mean().transpose();
  const Eigen::VectorXd var =
      (samples.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
  return {Field(grid, mean), Field(grid, var)};
}

double relative_error(const Field &estimate, const Field &truth) {
  if (!(estimate.grid == truth.grid) && estimate.values.size() != truth.values.size())
    throw std::invalid_argument("relative_error: fields live on different grids");
  const double tn = truth.values.norm();
  if (tn == 0.0) throw std::invalid_argument("relative_error: truth has zero norm");
  return (estimate.values - truth.values).norm() / tn;
}

Field make_truth(const Problem &p) {
  const auto &c = p.config;
  if (!c.truth_file.empty()) {
    Field f = load_field(c.truth_file);
    if (!(f.grid == p.grid)) throw std::invalid_argument("make_truth: truth file is on a different grid");
    return f;
  }
  Rng rng(c.truth_seed, 0x7472757468ULL);
  const double tau = c.truth_tau ? *c.truth_tau : rng.uniform(c.tau_min, c.tau_max);
  KLOptions kl;
  kl.dense_limit = c.kl_dense_limit;
  const KLBasis basis = kl_decompose(p.grid, std::sqrt(c.sigma_f2), tau, c.energy_frac,
                                     c.prior_mean, kl);
  return sample_field(basis, rng.normal_vector(static_cast<Eigen::Index>(basis.n_kl())));
}

std::vector<Sensor> make_sensors(const Problem &p) {
  if (!p.config.sensor_csv.empty())
    return load_sensor_csv(p.config.sensor_csv, p.grid, 1.0).sensors;
  return sensor_lattice(p.grid, p.config.sensors_n1, p.config.sensors_n2);
}

ObservationData make_observations(const Problem &p, const Field &truth) {
  ObservationData d{truth, solve_forward(p.grid, truth, p.bcs, p.source, p.solve), {}, {}};
  d.obs.sensors = make_sensors(p);
  d.noiseless = observe(d.state, d.obs.sensors);
  const double level = d.noiseless.cwiseAbs().mean();
  d.obs.noise_std = p.config.noise_fraction * level;
  if (!(d.obs.noise_std > 0.0))
    throw std::runtime_error("make_observations: noiseless observations are all zero");
  Rng rng(p.config.noise_seed, 0x6e6f697365ULL);
  d.obs.values = d.noiseless;
  for (Eigen::Index k = 0; k < d.obs.values.size(); ++k)
    d.obs.values[k] += p.config.noise_scale * d.obs.noise_std * rng.normal();
  d.obs.validate();
  return d;
}

ForwardMap global_forward(const Problem &problem, const VaeModel &vae,
                          const std::vector<Sensor> &sensors) {
  if (static_cast<std::size_t>(vae.input_dim()) != problem.grid.size())
    throw std::invalid_argument("global_forward: VAE output does not match the global grid");
  return [&problem, &vae, sensors](const Eigen::VectorXd &alpha) {
    const Field x(problem.grid, generate(vae, alpha));
    const Field u = solve_forward(problem.grid, x, problem.bcs, problem.source, problem.solve);
    return observe(u, sensors);
  };
}

ForwardMap local_forward(const Problem &problem, int subdomain, const VaeModel &vae,
                         const std::map<int, Eigen::VectorXd> &interface_values,
                         const std::vector<Sensor> &local_sensors) {
  const Subdomain &sub = problem.dec.sub(subdomain);
  if (static_cast<std::size_t>(vae.input_dim()) != sub.local_grid.size())
    throw std::invalid_argument("local_forward: VAE output does not match the subdomain grid");
  auto local_bcs =
      std::make_shared<BoundarySpec>(local_boundary(problem.dec, sub, interface_values, problem.bcs));
  return [&problem, &vae, &sub, local_bcs, local_sensors](const Eigen::VectorXd &beta) {
    const Field x(sub.local_grid, generate(vae, beta));
    const Field u = solve_forward(sub.local_grid, x, *local_bcs, problem.source, problem.solve);
    return observe(u, local_sensors);
  };
}

CostModel measure_costs(const Problem &p, const Field &field, std::size_t repetitions) {
  const std::size_t reps = std::max<std::size_t>(repetitions, 1);
  auto median_time = [reps](auto &&fn) {
    std::vector<double> t(reps);
    for (auto &v : t) {
      const auto t0 = Clock::now();
      fn();
      v = seconds_since(t0);
    }
    std::nth_element(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(reps / 2), t.end());
    return t[reps / 2];
  };
  CostModel c;
  Field state;
  c.global_seconds = median_time([&] { state = solve_forward(p.grid, field, p.bcs, p.source, p.solve); });
  double local = 0.0;
  for (const auto &sub : p.dec.subdomains) {
    const Field x = restrict_field(field, sub);
    const auto traces = interface_traces(state, sub);
    local += median_time([&] {
      (void)solve_local_forward(p.dec, sub, x, traces, p.bcs, p.source, p.solve);
    });
  }
  c.local_seconds = local / static_cast<double>(p.dec.size());
  return c;
}

std::size_t global_chain_length(std::size_t n_local, const CostModel &cost) {
  if (!(cost.global_seconds > 0.0 && cost.local_seconds > 0.0))
    throw std::invalid_argument("global_chain_length: non-positive solve times");
  const double n = std::round(static_cast<double>(n_local) * cost.local_seconds / cost.global_seconds);
  return static_cast<std::size_t>(std::max(1.0, n));
}

std::vector<InterfaceFit> fit_interfaces(const Problem &p, const ObservationSet &obs) {
  const auto &c = p.config;
  std::vector<InterfaceFit> fits(p.dec.pairs.size());
  for_each_index(fits.size(), c.exec(), [&](std::size_t k) {
    const auto [i, j] = p.dec.pairs[k];
    const Subdomain &si = p.dec.sub(i), &sj = p.dec.sub(j);
    const InterfaceSegment *seg = si.interface_with(j);
    InterfaceFit &f = fits[k];
    f.i = i;
    f.j = j;
    if (seg == nullptr) return;  // neighbours whose overlap adds no line node
    for (auto n : seg->global_nodes) f.nodes.push_back(p.grid.location(n));

    ObservationSet pool;
    pool.noise_std = obs.noise_std;
    std::vector<double> vals;
    for (std::size_t t = 0; t < obs.size(); ++t) {
      const auto node = obs.sensors[t].node;
      if (si.contains_global(p.grid, node) || sj.contains_global(p.grid, node)) {
        pool.sensors.push_back(obs.sensors[t]);
        vals.push_back(obs.values[static_cast<Eigen::Index>(t)]);
      }
    }
    if (pool.sensors.empty())
      throw std::runtime_error("fit_interfaces: no sensors in D_" + std::to_string(i) + " or D_" +
                               std::to_string(j));
    pool.values = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));

    AdaptiveOptions opts;
    opts.delta_tol = c.gp_delta_tol;
    opts.noise_var = obs.noise_std * obs.noise_std;
    opts.max_acquisitions = c.gp_max_acquisitions;
    opts.hyper.grid_points = c.gp_grid_points;
    opts.hyper.scale_min = c.gp_scale_min;
    opts.hyper.scale_max = c.gp_scale_max;
    opts.hyper.fallback_scale = p.grid.extent().diagonal() / 4.0;
    f.result = adaptive_fit(pool, f.nodes, opts);
    f.values = interface_values(f.result.model, f.nodes);
  });
  return fits;
}

std::map<int, Eigen::VectorXd> interface_dirichlet(const std::vector<InterfaceFit> &fits,
                                                  int subdomain) {
  std::map<int, Eigen::VectorXd> out;
  for (const auto &f : fits)
    if (f.i == subdomain && !f.nodes.empty()) out[f.j] = f.values;
  return out;
}

InterfaceErrors interface_state_errors(const std::vector<InterfaceFit> &fits,
                                       const ObservationData &data, const Problem &p) {
  InterfaceErrors e;
  for (const auto &f : fits) {
    if (f.nodes.empty()) continue;
    const auto *seg = p.dec.sub(f.i).interface_with(f.j);
    Eigen::VectorXd h(static_cast<Eigen::Index>(seg->global_nodes.size()));
    for (std::size_t k = 0; k < seg->global_nodes.size(); ++k)
      h[static_cast<Eigen::Index>(k)] = data.state.values[static_cast<Eigen::Index>(seg->global_nodes[k])];
    e.eps_int.push_back({{f.i, f.j}, (h - f.values).norm() / h.norm()});
  }
  for (const auto &sub : p.dec.subdomains) {
    if (sub.interfaces.empty()) {
      e.eps_state.push_back(0.0);
      continue;
    }
    const Field x = restrict_field(data.truth, sub);
    const Field exact =
        solve_local_forward(p.dec, sub, x, interface_traces(data.state, sub), p.bcs, p.source, p.solve);
    const Field gp =
        solve_local_forward(p.dec, sub, x, interface_dirichlet(fits, sub.index), p.bcs, p.source, p.solve);
    e.eps_state.push_back((gp.values - exact.values).norm() / exact.values.norm());
  }
  return e;
}

ChainRecord chain_record(const std::string &method, int domain, const Chain &chain, double seconds) {
  return {method, domain, chain.gamma, chain.size(), acceptance_rate(chain), chain.forward_evaluations,
          seconds};
}

Eigen::MatrixXd post_burn_in(const Chain &chain, double burn_in) {
  const auto n = static_cast<Eigen::Index>(chain.size());
  const auto skip = static_cast<Eigen::Index>(std::floor(burn_in * static_cast<double>(n)));
  if (skip >= n) throw std::invalid_argument("post_burn_in: burn-in discards the whole chain");
  return chain.samples.bottomRows(n - skip);
}

Eigen::MatrixXd decode_samples(const VaeModel &vae, const Eigen::MatrixXd &latents, Exec exec) {
  Eigen::MatrixXd out(latents.rows(), vae.input_dim());
  for_each_index(static_cast<std::size_t>(latents.rows()), exec, [&](std::size_t k) {
    const auto r = static_cast<Eigen::Index>(k);
    out.row(r) = generate(vae, latents.row(r).transpose()).transpose();
  });
  return out;
}

GlobalResult run_g_vae_mcmc(const Problem &p, const VaeModel &vae, const ObservationSet &obs,
                            std::size_t n_steps) {
  obs.validate();
  GlobalResult r;
  const GaussianPrior prior(vae.latent_dim());
  const auto t0 = Clock::now();
  r.chain = run_chain(global_forward(p, vae, obs.sensors), obs.values, obs.noise_std, prior,
                      p.config.gamma_global, n_steps, derive_seed(p.config.mcmc_seed, 0));
  r.record = chain_record("G-VAE-MCMC", 0, r.chain, seconds_since(t0));
  r.samples = decode_samples(vae, post_burn_in(r.chain, p.config.burn_in), p.config.exec());
  r.stats = posterior_stats(p.grid, r.samples);
  return r;
}

LocalChains run_local_chains(const Problem &p, const VaeModel &vae, const ObservationSet &obs,
                             const std::vector<InterfaceFit> &fits) {
  obs.validate();
  const auto locals = partition_observations(obs, p.dec);
  const std::size_t m = p.dec.size();
  LocalChains out;
  out.chains.resize(m);
  out.records.resize(m);
  for_each_index(m, p.config.exec(), [&](std::size_t k) {
    const int idx = static_cast<int>(k + 1);
    const auto sensors = local_sensors_of(p, idx, locals[k]);
    const auto forward = local_forward(p, idx, vae, interface_dirichlet(fits, idx), sensors);
    const GaussianPrior prior(vae.latent_dim());
    const auto t0 = Clock::now();
    out.chains[k] = run_chain(forward, locals[k].values, obs.noise_std, prior, p.config.gamma_for(idx),
                              p.config.n_local, derive_seed(p.config.mcmc_seed, k));
    out.records[k] = chain_record("DD-VAE-MCMC", idx, out.chains[k], seconds_since(t0));
  });
  return out;
}

DdResult combine_local_samples(const Problem &p, const VaeModel &vae, LocalChains chains) {
  DdResult r;
  r.local = std::move(chains);
  const std::size_t m = p.dec.size();
  if (r.local.chains.size() != m) throw std::invalid_argument("combine_local_samples: one chain per subdomain needed");
  for (const auto &c : r.local.chains)
    r.local_samples.push_back(decode_samples(vae, post_burn_in(c, p.config.burn_in), p.config.exec()));
  const Eigen::Index count = r.local_samples.front().rows();
  for (const auto &s : r.local_samples)
    if (s.rows() != count) throw std::invalid_argument("combine_local_samples: chains differ in length");

  if (m == 1) {
    r.blended = r.local_samples.front();
    r.stitched = r.blended;
  } else {
    const auto gsize = static_cast<Eigen::Index>(p.grid.size());
    r.stitched.resize(count, gsize);
    for (Eigen::Index k = 0; k < count; ++k) {
      std::vector<Field> parts;
      for (std::size_t s = 0; s < m; ++s)
        parts.emplace_back(p.dec.subdomains[s].local_grid, r.local_samples[s].row(k).transpose());
      r.stitched.row(k) = stitch_fields(parts, p.dec).values.transpose();
    }
    if (m != 2) throw std::invalid_argument("combine_local_samples: blending supports two subdomains");
    const PoissonBlender blender(p.dec);
    std::vector<Field> x1, x2;
    x1.reserve(static_cast<std::size_t>(count));
    x2.reserve(static_cast<std::size_t>(count));
    for (Eigen::Index k = 0; k < count; ++k) {
      x1.emplace_back(p.dec.sub(1).local_grid, r.local_samples[0].row(k).transpose());
      x2.emplace_back(p.dec.sub(2).local_grid, r.local_samples[1].row(k).transpose());
    }
    const auto blended = blender.blend_batch(x1, x2, p.config.exec());
    r.blended.resize(count, gsize);
    for (Eigen::Index k = 0; k < count; ++k)
      r.blended.row(k) = blended[static_cast<std::size_t>(k)].values.transpose();
  }
  r.ble = posterior_stats(p.grid, r.blended);
  r.sti = posterior_stats(p.grid, r.stitched);
  return r;
}

DdResult run_dd_vae_mcmc(const Problem &p, const VaeModel &vae, const ObservationSet &obs,
                         const std::vector<InterfaceFit> &fits) {
  return combine_local_samples(p, vae, run_local_chains(p, vae, obs, fits));
}

namespace {

VaeModel new_vae(const VaeConfig &vc, Eigen::Index input_dim) {
  VaeArchitecture a;
  a.input_dim = input_dim;
  a.latent_dim = vc.latent_dim;
  a.encoder_hidden = vc.encoder_hidden;
  a.decoder_hidden = vc.decoder_hidden;
  a.leaky_slope = vc.leaky_slope;
  return make_vae(a, vc.init_seed);
}

TrainConfig train_config(const VaeConfig &vc, Exec exec) {
  TrainConfig t = vc.train;
  t.exec = exec;
  return t;
}

}  // namespace

ExperimentResult run_dd_experiment(const ExperimentConfig &config) {
  const Problem p = make_problem(config);
  ExperimentResult r;
  const Dataset ds = generate_dataset(p.grid, config.dataset_spec(), config.exec());
  r.data = make_observations(p, make_truth(p));
  const Dataset aug = augment_dataset(ds, p.dec);
  VaeModel vae = new_vae(config.vae_local, static_cast<Eigen::Index>(aug.grid.size()));
  r.local_loss = train(vae, aug.matrix(), train_config(config.vae_local, config.exec())).epoch_loss;
  r.fits = fit_interfaces(p, r.data.obs);
  r.interface_errors = interface_state_errors(r.fits, r.data, p);
  r.dd = run_dd_vae_mcmc(p, vae, r.data.obs, r.fits);
  r.eps_ble = relative_error(r.dd.ble.mean, r.data.truth);
  r.eps_sti = relative_error(r.dd.sti.mean, r.data.truth);
  r.seam_ble = seam_jump(r.dd.ble.mean, p.dec);
  r.seam_sti = seam_jump(r.dd.sti.mean, p.dec);
  r.cost = measure_costs(p, r.data.truth, config.cost_repetitions);
  return r;
}

// ---------------------------------------------------------------------------
// File-driven stages

namespace {

Workspace workspace(const ExperimentConfig &c) {
  fs::create_directories(c.output_dir);
  return {c.output_dir};
}

void write_json(const fs::path &path, const json &j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << j.dump(2) << '\n';
}

json read_json(const fs::path &path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("missing input " + path.string() + " (run the earlier stages first)");
  return json::parse(is);
}

ObservationSet load_observations(const Workspace &ws, const Grid &grid) {
  const auto meta = read_json(ws.observations());
  return load_sensor_csv(ws.sensors(), grid, meta.at("noise_std").get<double>());
}

ObservationData load_observation_data(const Workspace &ws, const Grid &grid) {
  ObservationData d;
  d.truth = load_field(ws.truth());
  d.state = load_field(ws.state());
  d.obs = load_observations(ws, grid);
  d.noiseless = observe(d.state, d.obs.sensors);
  return d;
}

json points_json(const std::vector<Point> &pts) {
  json a = json::array();
  for (const auto &q : pts) a.push_back({q.s1, q.s2});
  return a;
}

std::vector<Point> points_from(const json &a) {
  std::vector<Point> out;
  for (const auto &q : a) out.push_back({q.at(0).get<double>(), q.at(1).get<double>()});
  return out;
}

json fits_json(const std::vector<InterfaceFit> &fits) {
  json arr = json::array();
  for (const auto &f : fits) {
    json j;
    j["i"] = f.i;
    j["j"] = f.j;
    j["nodes"] = points_json(f.nodes);
    const auto &m = f.result.model;
    j["kernel_scale"] = m.kernel_scale;
    j["noise_var"] = m.noise_var;
    j["train_locations"] = points_json(m.train_locations);
    j["train_values"] = std::vector<double>(m.train_values.data(), m.train_values.data() + m.train_values.size());
    j["converged"] = f.result.trace.converged;
    j["exhausted"] = f.result.trace.exhausted;
    j["acquisitions"] = f.result.trace.acquisitions();
    j["final_max_variance"] = f.result.trace.final_max_variance();
    arr.push_back(j);
  }
  return arr;
}

std::vector<InterfaceFit> fits_from(const json &arr) {
  std::vector<InterfaceFit> fits;
  for (const auto &j : arr) {
    InterfaceFit f;
    f.i = j.at("i").get<int>();
    f.j = j.at("j").get<int>();
    f.nodes = points_from(j.at("nodes"));
    if (!f.nodes.empty()) {
      const auto vals = j.at("train_values").get<std::vector<double>>();
      f.result.model = fit_gp(points_from(j.at("train_locations")),
                              Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size())),
                              j.at("kernel_scale").get<double>(), j.at("noise_var").get<double>());
      f.values = interface_values(f.result.model, f.nodes);
    }
    f.result.trace.converged = j.at("converged").get<bool>();
    f.result.trace.exhausted = j.at("exhausted").get<bool>();
    AcquisitionStep last;
    last.train_size = f.result.model.size();
    last.max_variance = j.at("final_max_variance").get<double>();
    f.result.trace.steps.push_back(last);
    fits.push_back(std::move(f));
  }
  return fits;
}

json record_json(const ChainRecord &r) {
  return {{"method", r.method},
          {"domain", r.domain},
          {"gamma", r.gamma},
          {"n_steps", r.n_steps},
          {"acceptance_rate", r.acceptance},
          {"forward_evaluations", r.forward_evaluations}};
}

void write_csv_rows(const fs::path &path, const std::string &header,
                    const std::vector<std::string> &rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << header << '\n';
  for (const auto &r : rows) os << r << '\n';
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string scope_check(const std::string &scope) {
  if (scope != "global" && scope != "local")
    throw std::invalid_argument("train-vae: scope must be 'global' or 'local'");
  return scope;
}

}  // namespace

namespace stages {

void generate_data(const ExperimentConfig &config) {
  const Problem p = make_problem(config);
  const Workspace ws = workspace(config);
  save_config(ws.root / "config.json", config);
  const auto t0 = Clock::now();
  const Dataset ds = generate_dataset(p.grid, config.dataset_spec(), config.exec());
  save_dataset(ws.dataset(), ds);
  const ObservationData d = make_observations(p, make_truth(p));
  save_field(ws.truth(), d.truth);
  save_field(ws.state(), d.state);
  save_sensor_csv(ws.sensors(), d.obs);
  write_json(ws.observations(),
             {{"noise_std", d.obs.noise_std},
              {"noise_fraction", config.noise_fraction},
              {"mean_abs_noiseless", d.noiseless.cwiseAbs().mean()},
              {"sensor_count", d.obs.size()},
              {"noiseless", std::vector<double>(d.noiseless.data(), d.noiseless.data() + d.noiseless.size())}});
  write_json(ws.root / "generate_timing.json", {{"seconds", seconds_since(t0)}});
}

void train_vae(const ExperimentConfig &config, const std::string &scope) {
  scope_check(scope);
  const Problem p = make_problem(config);
  const Workspace ws = workspace(config);
  const Dataset ds = load_dataset(ws.dataset());
  if (!(ds.grid == p.grid)) throw std::runtime_error("train-vae: dataset grid does not match the config");
  const Dataset data = scope == "global" ? ds : augment_dataset(ds, p.dec);
  const VaeConfig &vc = scope == "global" ? config.vae_global : config.vae_local;
  VaeModel vae = new_vae(vc, static_cast<Eigen::Index>(data.grid.size()));
  const Eigen::MatrixXd x = data.matrix();
  const auto t0 = Clock::now();
  const TrainHistory h = train(vae, x, train_config(vc, config.exec()));
  const double secs = seconds_since(t0);

  // Moment check of the generator against the training data.
  Rng rng(vc.train.seed, 0x67656eULL);
  const std::size_t n_gen = 1000;
  Eigen::MatrixXd lat(static_cast<Eigen::Index>(n_gen), vae.latent_dim());
  rng.fill_normal(lat);
  const Eigen::MatrixXd gen = decode_samples(vae, lat, config.exec());
  const double data_mean = x.mean();
  const double data_var = (x.array() - data_mean).square().mean();
  const double gen_mean = gen.mean();
  const double gen_var = (gen.array() - gen_mean).square().mean();

  json info = {{"scope", scope},
               {"input_dim", vae.input_dim()},
               {"latent_dim", vae.latent_dim()},
               {"dataset_size", data.size()},
               {"epochs", vc.train.epochs},
               {"final_loss", h.epoch_loss.back()},
               {"first_loss", h.epoch_loss.front()},
               {"data_mean", data_mean},
               {"data_variance", data_var},
               {"generated_mean", gen_mean},
               {"generated_variance", gen_var}};
  save_vae(ws.vae(scope), vae, info.dump());
  info["training_seconds"] = secs;
  write_json(ws.root / ("vae_" + scope + ".json"), info);
  std::vector<std::string> rows;
  for (std::size_t e = 0; e < h.epoch_loss.size(); ++e) rows.push_back(std::to_string(e + 1) + "," + fmt(h.epoch_loss[e]));
  write_csv_rows(ws.root / ("vae_" + scope + "_loss.csv"), "epoch,mean_loss", rows);
}

void fit_interfaces(const ExperimentConfig &config) {
  const Problem p = make_problem(config);
  const Workspace ws = workspace(config);
  const ObservationData d = load_observation_data(ws, p.grid);
  const auto fits = ddvae::fit_interfaces(p, d.obs);
  for (const auto &f : fits)
    if (!f.nodes.empty())
      save_acquisition_csv(ws.root / ("gp_trace_" + std::to_string(f.i) + "_" + std::to_string(f.j) + ".csv"),
                           f.result.trace);
  const auto errs = interface_state_errors(fits, d, p);
  json e_int = json::array(), e_state = json::array();
  for (const auto &[ij, v] : errs.eps_int) e_int.push_back({{"i", ij.first}, {"j", ij.second}, {"value", v}});
  for (std::size_t k = 0; k < errs.eps_state.size(); ++k)
    e_state.push_back({{"subdomain", k + 1}, {"value", errs.eps_state[k]}});
  write_json(ws.interfaces(), {{"fits", fits_json(fits)}, {"eps_int", e_int}, {"eps_state", e_state}});
}

void invert(const ExperimentConfig &config, const std::string &method) {
  const Problem p = make_problem(config);
  const Workspace ws = workspace(config);
  const ObservationSet obs = load_observations(ws, p.grid);
  if (method == "dd") {
    const VaeModel vae = load_vae(ws.vae("local"));
    std::vector<InterfaceFit> fits;
    if (p.dec.size() > 1) fits = fits_from(read_json(ws.interfaces()).at("fits"));
    const LocalChains lc = run_local_chains(p, vae, obs, fits);
    fs::create_directories(ws.chains("dd"));
    json recs = json::array(), timing = json::array();
    for (std::size_t k = 0; k < lc.chains.size(); ++k) {
      save_chain(ws.chains("dd") / ("chain_" + std::to_string(k + 1)), lc.chains[k]);
      recs.push_back(record_json(lc.records[k]));
      timing.push_back({{"domain", k + 1}, {"seconds", lc.records[k].seconds}});
    }
    write_json(ws.chains("dd") / "records.json", recs);
    write_json(ws.chains("dd") / "timing.json", timing);
  } else if (method == "global") {
    const VaeModel vae = load_vae(ws.vae("global"));
    const Field truth = load_field(ws.truth());
    const CostModel cost = measure_costs(p, truth, config.cost_repetitions);
    const std::size_t n = config.n_global > 0 ? config.n_global : global_chain_length(config.n_local, cost);
    const GlobalResult g = run_g_vae_mcmc(p, vae, obs, n);
    fs::create_directories(ws.chains("global"));
    save_chain(ws.chains("global") / "chain_0", g.chain);
    write_json(ws.chains("global") / "records.json", json::array({record_json(g.record)}));
    write_json(ws.chains("global") / "timing.json",
               {{"seconds", g.record.seconds},
                {"global_solve_seconds", cost.global_seconds},
                {"local_solve_seconds", cost.local_seconds},
                {"cost_ratio", cost.ratio()},
                {"chain_length_from_cost", config.n_global == 0}});
    save_matrix(ws.samples("global"), g.samples);
  } else {
    throw std::invalid_argument("invert: method must be 'dd' or 'global'");
  }
}

void blend(const ExperimentConfig &config) {
  const Problem p = make_problem(config);
  const Workspace ws = workspace(config);
  const VaeModel vae = load_vae(ws.vae("local"));
  LocalChains lc;
  for (std::size_t k = 0; k < p.dec.size(); ++k) {
    lc.chains.push_back(load_chain(ws.chains("dd") / ("chain_" + std::to_string(k + 1))));
    lc.records.push_back(chain_record("DD-VAE-MCMC", static_cast<int>(k + 1), lc.chains.back(), 0.0));
  }
  const DdResult r = combine_local_samples(p, vae, std::move(lc));
  save_matrix(ws.samples("blended"), r.blended);
  save_matrix(ws.samples("stitched"), r.stitched);
}

void stats(const ExperimentConfig &config) {
  const Problem p = make_problem(config);
  const Workspace ws = workspace(config);
  fs::create_directories(ws.stats());
  const Field truth = load_field(ws.truth());
  save_field_csv(ws.stats() / "truth.csv", truth);
  json errors = json::object();
  bool any = false;
  for (const std::string name : {"blended", "stitched", "global"}) {
    if (!fs::exists(ws.samples(name))) continue;
    any = true;
    const PosteriorStats s = posterior_stats(p.grid, load_matrix(ws.samples(name)));
    save_field(ws.stats() / (name + "_mean.fld"), s.mean);
    save_field(ws.stats() / (name + "_variance.fld"), s.variance);
    save_field_csv(ws.stats() / (name + "_mean.csv"), s.mean);
    save_field_csv(ws.stats() / (name + "_variance.csv"), s.variance);
    errors[name] = {{"relative_error", relative_error(s.mean, truth)},
                    {"seam_jump", p.dec.size() == 2 ? seam_jump(s.mean, p.dec) : 0.0},
                    {"mean_variance", s.variance.values.mean()}};
  }
  if (!any) throw std::runtime_error("stats: no posterior samples found (run invert/blend first)");
  write_json(ws.stats() / "errors.json", errors);
}

void report(const ExperimentConfig &config) {
  const Workspace ws = workspace(config);
  fs::create_directories(ws.tables());
  json summary;
  summary["config"] = config_to_json(config);
  summary["config"].erase("output_dir");

  const auto errs = read_json(ws.stats() / "errors.json");
  summary["errors"] = errs;
  {
    std::vector<std::string> rows;
    const std::pair<const char *, const char *> names[] = {
        {"blended", "DD-VAE-MCMC"}, {"stitched", "Stitched field"}, {"global", "G-VAE-MCMC"}};
    for (const auto &[key, label] : names)
      if (errs.contains(key)) rows.push_back(std::string(label) + "," + fmt(errs[key]["relative_error"].get<double>()));
    write_csv_rows(ws.tables() / "mean_errors.csv", "method,relative_error", rows);
  }

  json chains = json::array();
  std::vector<std::string> mrows;
  for (const std::string method : {"dd", "global"}) {
    const auto path = ws.chains(method) / "records.json";
    if (!fs::exists(path)) continue;
    for (const auto &r : read_json(path)) {
      chains.push_back(r);
      const int dom = r.at("domain").get<int>();
      mrows.push_back(r.at("method").get<std::string>() + "," + (dom == 0 ? std::string("D") : "D" + std::to_string(dom)) +
                      "," + fmt(r.at("gamma").get<double>()) + "," + std::to_string(r.at("n_steps").get<std::size_t>()) +
                      "," + fmt(r.at("acceptance_rate").get<double>()) + "," +
                      std::to_string(r.at("forward_evaluations").get<std::size_t>()));
    }
  }
  summary["chains"] = chains;
  write_csv_rows(ws.tables() / "mcmc.csv", "method,domain,step_size,chain_length,acceptance_rate,forward_evaluations", mrows);

  if (fs::exists(ws.interfaces())) {
    const auto itf = read_json(ws.interfaces());
    std::vector<std::string> arows, erows;
    json gp = json::array();
    for (const auto &f : itf.at("fits")) {
      if (f.at("nodes").empty()) continue;
      const std::string name = "d_" + std::to_string(f.at("j").get<int>()) + " D_" + std::to_string(f.at("i").get<int>());
      arows.push_back(name + "," + std::to_string(f.at("train_locations").size()) + "," +
                      fmt(f.at("final_max_variance").get<double>()) + "," +
                      (f.at("converged").get<bool>() ? "true" : "false") + "," +
                      std::to_string(f.at("acquisitions").get<std::size_t>()));
      gp.push_back({{"i", f.at("i")}, {"j", f.at("j")}, {"train_size", f.at("train_locations").size()},
                    {"final_max_variance", f.at("final_max_variance")}, {"converged", f.at("converged")}});
    }
    for (const auto &e : itf.at("eps_int"))
      erows.push_back("eps_int,d_" + std::to_string(e.at("j").get<int>()) + " D_" + std::to_string(e.at("i").get<int>()) +
                      "," + fmt(e.at("value").get<double>()));
    for (const auto &e : itf.at("eps_state"))
      erows.push_back("eps_state,D_" + std::to_string(e.at("subdomain").get<int>()) + "," + fmt(e.at("value").get<double>()));
    write_csv_rows(ws.tables() / "gp_acquisition.csv", "interface,train_size,max_variance,converged,acquisitions", arows);
    write_csv_rows(ws.tables() / "interface_errors.csv", "metric,location,value", erows);
    summary["interfaces"] = {{"fits", gp}, {"eps_int", itf.at("eps_int")}, {"eps_state", itf.at("eps_state")}};
  }

  std::vector<std::string> vrows;
  json vaes = json::object(), timing = json::object();
  for (const std::string scope : {"global", "local"}) {
    const auto path = ws.root / ("vae_" + scope + ".json");
    if (!fs::exists(path)) continue;
    auto v = read_json(path);
    timing["vae_" + scope + "_seconds"] = v.at("training_seconds");
    vrows.push_back(std::string(scope == "global" ? "G-VAE" : "DD-VAE") + "," + std::to_string(v.at("input_dim").get<long>()) +
                    "," + std::to_string(v.at("latent_dim").get<long>()) + "," +
                    std::to_string(v.at("dataset_size").get<std::size_t>()) + "," +
                    fmt(v.at("training_seconds").get<double>()) + "," + fmt(v.at("final_loss").get<double>()) + "," +
                    fmt(v.at("data_mean").get<double>()) + "," + fmt(v.at("generated_mean").get<double>()) + "," +
                    fmt(v.at("data_variance").get<double>()) + "," + fmt(v.at("generated_variance").get<double>()));
    v.erase("training_seconds");
    vaes[scope] = v;
  }
  summary["vae"] = vaes;
  write_csv_rows(ws.tables() / "vae.csv",
                 "model,input_dim,latent_dim,dataset_size,training_seconds,final_loss,data_mean,generated_mean,"
                 "data_variance,generated_variance",
                 vrows);

  const auto gt = ws.chains("global") / "timing.json";
  if (fs::exists(gt)) {
    const auto t = read_json(gt);
    timing["global_chain"] = t;
    write_csv_rows(ws.tables() / "cost.csv", "global_solve_seconds,local_solve_seconds,ratio",
                   {fmt(t.at("global_solve_seconds").get<double>()) + "," +
                    fmt(t.at("local_solve_seconds").get<double>()) + "," + fmt(t.at("cost_ratio").get<double>())});
  }
  const auto dt = ws.chains("dd") / "timing.json";
  if (fs::exists(dt)) timing["local_chains"] = read_json(dt);

  write_json(ws.root / "summary.json", summary);
  write_json(ws.root / "timing.json", timing);
}

}  // namespace stages

}  // namespace ddvae
