#include "ddvae/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace ddvae {

using nlohmann::json;

namespace {

void reject_unknown(const json &j, const std::string &section, const std::set<std::string> &known) {
  if (!j.is_object()) throw std::invalid_argument("config: section '" + section + "' must be an object");
  for (const auto &[key, _] : j.items())
    if (!known.count(key))
      throw std::invalid_argument("config: unknown key '" + key + "' in section '" + section + "'");
}

template <class T> void read(const json &j, const char *key, T &out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

Extent extent_from(const json &j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 4) throw std::invalid_argument("config: extent needs [s1_min, s1_max, s2_min, s2_max]");
  return {v[0], v[1], v[2], v[3]};
}

json extent_to(const Extent &e) { return json::array({e.s1_min, e.s1_max, e.s2_min, e.s2_max}); }

VaeConfig vae_from(const json &j, VaeConfig c, const std::string &name) {
  reject_unknown(j, name,
                 {"latent_dim", "encoder_hidden", "decoder_hidden", "leaky_slope", "epochs",
                  "batch_size", "learning_rate", "beta1", "beta2", "adam_eps", "seed",
                  "init_seed", "standardize"});
  read(j, "latent_dim", c.latent_dim);
  read(j, "encoder_hidden", c.encoder_hidden);
  read(j, "decoder_hidden", c.decoder_hidden);
  read(j, "leaky_slope", c.leaky_slope);
  read(j, "epochs", c.train.epochs);
  read(j, "batch_size", c.train.batch_size);
  read(j, "learning_rate", c.train.learning_rate);
  read(j, "beta1", c.train.adam_beta1);
  read(j, "beta2", c.train.adam_beta2);
  read(j, "adam_eps", c.train.adam_eps);
  read(j, "seed", c.train.seed);
  read(j, "init_seed", c.init_seed);
  read(j, "standardize", c.train.standardize);
  return c;
}

json vae_to(const VaeConfig &c) {
  return {{"latent_dim", c.latent_dim},         {"encoder_hidden", c.encoder_hidden},
          {"decoder_hidden", c.decoder_hidden}, {"leaky_slope", c.leaky_slope},
          {"epochs", c.train.epochs},           {"batch_size", c.train.batch_size},
          {"learning_rate", c.train.learning_rate}, {"beta1", c.train.adam_beta1},
          {"beta2", c.train.adam_beta2},        {"adam_eps", c.train.adam_eps},
          {"seed", c.train.seed},               {"init_seed", c.init_seed},
          {"standardize", c.train.standardize}};
}

}  // namespace

double ExperimentConfig::gamma_for(int subdomain) const {
  if (gamma_local.empty()) throw std::invalid_argument("config: mcmc.gamma_local is empty");
  if (gamma_local.size() == 1) return gamma_local.front();
  const auto k = static_cast<std::size_t>(subdomain - 1);
  if (k >= gamma_local.size())
    throw std::invalid_argument("config: no step size for subdomain " + std::to_string(subdomain));
  return gamma_local[k];
}

DatasetSpec ExperimentConfig::dataset_spec() const {
  DatasetSpec s;
  s.tau_min = tau_min;
  s.tau_max = tau_max;
  s.sigma_f = std::sqrt(sigma_f2);
  s.mean = prior_mean;
  s.energy_frac = energy_frac;
  s.count = dataset_count;
  s.seed = dataset_seed;
  s.tau_bins = tau_bins;
  s.kl.dense_limit = kl_dense_limit;
  return s;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string &m) { throw std::invalid_argument("config: " + m); };
  if (nx < 2 || ny < 2) fail("grid needs at least 2x2 nodes");
  if (!(extent.width() > 0.0 && extent.height() > 0.0)) fail("degenerate extent");
  if (cuts.empty()) fail("decomposition needs at least one cut");
  if (!(sigma_f2 > 0.0)) fail("prior.sigma_f2 must be positive");
  if (!(tau_min > 0.0 && tau_max >= tau_min)) fail("prior tau range must satisfy 0 < tau_min <= tau_max");
  if (!(energy_frac > 0.0 && energy_frac < 1.0)) fail("prior.energy_frac must lie in (0, 1)");
  if (dataset_count < 1) fail("dataset.count must be >= 1");
  if (truth_file.empty() && truth_seed == dataset_seed)
    fail("truth.seed must differ from dataset.seed so the truth stays out of the training data");
  if (!(noise_fraction > 0.0)) fail("noise.fraction must be positive");
  if (!(noise_scale >= 0.0)) fail("noise.scale must be non-negative");
  if (sensor_csv.empty() && (sensors_n1 == 0 || sensors_n2 == 0)) fail("empty sensor lattice");
  if (!(burn_in >= 0.0 && burn_in < 1.0)) fail("mcmc.burn_in must lie in [0, 1)");
  if (n_local < 1) fail("mcmc.n_local must be >= 1");
  auto check_gamma = [&](double g) {
    if (!(g > 0.0 && g <= 1.0)) fail("MCMC step sizes must lie in (0, 1]");
  };
  check_gamma(gamma_global);
  for (double g : gamma_local) check_gamma(g);
  if (gamma_local.size() != 1 && gamma_local.size() != cuts.size())
    fail("mcmc.gamma_local needs one entry or one per subdomain");
  if (!(gp_delta_tol > 0.0)) fail("gp.delta_tol must be positive");
  if (dirichlet_abscissae.empty()) fail("pde.dirichlet_abscissae is empty");
  for (const auto *v : {&vae_global, &vae_local}) {
    if (v->latent_dim < 1) fail("VAE latent_dim must be positive");
    if (v->encoder_hidden.empty()) fail("VAE encoder needs a hidden layer");
    if (v->train.epochs < 1 || v->train.batch_size < 1) fail("VAE epochs and batch_size must be >= 1");
  }
}

ExperimentConfig config_from_json(const json &j) {
  ExperimentConfig c;
  reject_unknown(j, "root",
                 {"grid", "decomposition", "prior", "dataset", "vae_global", "vae_local", "sensors",
                  "noise", "truth", "pde", "gp", "mcmc", "parallel", "output_dir"});
  if (j.contains("grid")) {
    const auto &g = j.at("grid");
    reject_unknown(g, "grid", {"nx", "ny", "extent"});
    read(g, "nx", c.nx);
    read(g, "ny", c.ny);
    if (g.contains("extent")) c.extent = extent_from(g.at("extent"));
  }
  if (j.contains("decomposition")) {
    const auto &d = j.at("decomposition");
    reject_unknown(d, "decomposition", {"cuts"});
    if (d.contains("cuts")) {
      c.cuts.clear();
      for (const auto &e : d.at("cuts")) c.cuts.push_back(extent_from(e));
    }
  }
  if (j.contains("prior")) {
    const auto &p = j.at("prior");
    reject_unknown(p, "prior",
                   {"sigma_f2", "tau_min", "tau_max", "mean", "energy_frac", "tau_bins", "kl_dense_limit"});
    read(p, "sigma_f2", c.sigma_f2);
    read(p, "tau_min", c.tau_min);
    read(p, "tau_max", c.tau_max);
    read(p, "mean", c.prior_mean);
    read(p, "energy_frac", c.energy_frac);
    read(p, "tau_bins", c.tau_bins);
    read(p, "kl_dense_limit", c.kl_dense_limit);
  }
  if (j.contains("dataset")) {
    const auto &d = j.at("dataset");
    reject_unknown(d, "dataset", {"count", "seed"});
    read(d, "count", c.dataset_count);
    read(d, "seed", c.dataset_seed);
  }
  if (j.contains("vae_global")) c.vae_global = vae_from(j.at("vae_global"), c.vae_global, "vae_global");
  if (j.contains("vae_local")) c.vae_local = vae_from(j.at("vae_local"), c.vae_local, "vae_local");
  if (j.contains("sensors")) {
    const auto &s = j.at("sensors");
    reject_unknown(s, "sensors", {"n1", "n2", "csv"});
    read(s, "n1", c.sensors_n1);
    read(s, "n2", c.sensors_n2);
    read(s, "csv", c.sensor_csv);
  }
  if (j.contains("noise")) {
    const auto &n = j.at("noise");
    reject_unknown(n, "noise", {"fraction", "scale", "seed"});
    read(n, "fraction", c.noise_fraction);
    read(n, "scale", c.noise_scale);
    read(n, "seed", c.noise_seed);
  }
  if (j.contains("truth")) {
    const auto &t = j.at("truth");
    reject_unknown(t, "truth", {"seed", "tau", "file"});
    read(t, "seed", c.truth_seed);
    if (t.contains("tau") && !t.at("tau").is_null()) c.truth_tau = t.at("tau").get<double>();
    read(t, "file", c.truth_file);
  }
  if (j.contains("pde")) {
    const auto &p = j.at("pde");
    reject_unknown(p, "pde", {"dirichlet_abscissae", "source_center", "solver"});
    read(p, "dirichlet_abscissae", c.dirichlet_abscissae);
    if (p.contains("source_center")) {
      const auto v = p.at("source_center").get<std::vector<double>>();
      if (v.size() != 2) throw std::invalid_argument("config: pde.source_center needs two entries");
      c.source_center = {v[0], v[1]};
    }
    if (p.contains("solver")) {
      const auto s = p.at("solver").get<std::string>();
      if (s == "direct")
        c.solver = LinearSolverKind::direct;
      else if (s == "cg")
        c.solver = LinearSolverKind::cg;
      else
        throw std::invalid_argument("config: pde.solver must be 'direct' or 'cg'");
    }
  }
  if (j.contains("gp")) {
    const auto &g = j.at("gp");
    reject_unknown(g, "gp", {"delta_tol", "max_acquisitions", "grid_points", "scale_min", "scale_max"});
    read(g, "delta_tol", c.gp_delta_tol);
    if (g.contains("max_acquisitions") && g.at("max_acquisitions").is_null())
      c.gp_max_acquisitions = static_cast<std::size_t>(-1);
    else
      read(g, "max_acquisitions", c.gp_max_acquisitions);
    read(g, "grid_points", c.gp_grid_points);
    read(g, "scale_min", c.gp_scale_min);
    read(g, "scale_max", c.gp_scale_max);
  }
  if (j.contains("mcmc")) {
    const auto &m = j.at("mcmc");
    reject_unknown(m, "mcmc",
                   {"gamma_global", "gamma_local", "n_local", "n_global", "burn_in", "seed",
                    "cost_repetitions"});
    read(m, "gamma_global", c.gamma_global);
    read(m, "gamma_local", c.gamma_local);
    read(m, "n_local", c.n_local);
    read(m, "n_global", c.n_global);
    read(m, "burn_in", c.burn_in);
    read(m, "seed", c.mcmc_seed);
    read(m, "cost_repetitions", c.cost_repetitions);
  }
  read(j, "parallel", c.parallel);
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig &c) {
  json cuts = json::array();
  for (const auto &e : c.cuts) cuts.push_back(extent_to(e));
  json truth = {{"seed", c.truth_seed}, {"file", c.truth_file}};
  truth["tau"] = c.truth_tau ? json(*c.truth_tau) : json(nullptr);
  return {
      {"grid", {{"nx", c.nx}, {"ny", c.ny}, {"extent", extent_to(c.extent)}}},
      {"decomposition", {{"cuts", cuts}}},
      {"prior",
       {{"sigma_f2", c.sigma_f2}, {"tau_min", c.tau_min}, {"tau_max", c.tau_max},
        {"mean", c.prior_mean}, {"energy_frac", c.energy_frac}, {"tau_bins", c.tau_bins},
        {"kl_dense_limit", c.kl_dense_limit}}},
      {"dataset", {{"count", c.dataset_count}, {"seed", c.dataset_seed}}},
      {"vae_global", vae_to(c.vae_global)},
      {"vae_local", vae_to(c.vae_local)},
      {"sensors", {{"n1", c.sensors_n1}, {"n2", c.sensors_n2}, {"csv", c.sensor_csv}}},
      {"noise", {{"fraction", c.noise_fraction}, {"scale", c.noise_scale}, {"seed", c.noise_seed}}},
      {"truth", truth},
      {"pde",
       {{"dirichlet_abscissae", c.dirichlet_abscissae},
        {"source_center", {c.source_center.s1, c.source_center.s2}},
        {"solver", c.solver == LinearSolverKind::direct ? "direct" : "cg"}}},
      {"gp",
       {{"delta_tol", c.gp_delta_tol},
        {"max_acquisitions", c.gp_max_acquisitions == static_cast<std::size_t>(-1) ? json(nullptr)
                                                                                   : json(c.gp_max_acquisitions)},
        {"grid_points", c.gp_grid_points}, {"scale_min", c.gp_scale_min},
        {"scale_max", c.gp_scale_max}}},
      {"mcmc",
       {{"gamma_global", c.gamma_global}, {"gamma_local", c.gamma_local}, {"n_local", c.n_local},
        {"n_global", c.n_global}, {"burn_in", c.burn_in}, {"seed", c.mcmc_seed},
        {"cost_repetitions", c.cost_repetitions}}},
      {"parallel", c.parallel},
      {"output_dir", c.output_dir.string()},
  };
}

ExperimentConfig load_config(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error &e) {
    throw std::invalid_argument("load_config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path &path, const ExperimentConfig &c) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_config: cannot open " + path.string());
  os << config_to_json(c).dump(2) << '\n';
}

}  // namespace ddvae
