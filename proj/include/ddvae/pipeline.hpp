#pragma once

#include "ddvae/blend.hpp"
#include "ddvae/config.hpp"
#include "ddvae/darcy.hpp"
#include "ddvae/gp.hpp"
#include "ddvae/grid.hpp"
#include "ddvae/pcn.hpp"
#include "ddvae/vae.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ddvae {

/// Runtime objects derived from a configuration.
struct Problem {
  ExperimentConfig config;
  Grid grid;
  Decomposition dec;
  BoundarySpec bcs;
  ScalarFn source;
  SolveOptions solve;
};

Problem make_problem(const ExperimentConfig &config);

struct PosteriorStats {
  Field mean;
  Field variance;  // population form, divisor K
};

PosteriorStats posterior_stats(const std::vector<Field> &samples);
/// Statistics of the rows of `samples` (one field per row) on `grid`.
PosteriorStats posterior_stats(const Grid &grid, const Eigen::MatrixXd &samples);

/// |estimate - truth|_2 / |truth|_2 over nodal values.
double relative_error(const Field &estimate, const Field &truth);

struct ObservationData {
  Field truth;                 // log-permeability
  Field state;                 // noiseless pressure of the truth
  Eigen::VectorXd noiseless;   // state at the sensors
  ObservationSet obs;          // noisy data and noise level
};

/// Truth log-permeability: the configured file, or a KL draw whose seed
/// stream is disjoint from the training data.
Field make_truth(const Problem &problem);
std::vector<Sensor> make_sensors(const Problem &problem);
/// Forward solve of the truth, sensor readout, noise level
/// noise_fraction * mean |noiseless| and seeded Gaussian noise.
ObservationData make_observations(const Problem &problem, const Field &truth);

/// alpha -> observe(solve_forward(generate(alpha))) on the global grid.
ForwardMap global_forward(const Problem &problem, const VaeModel &vae,
                          const std::vector<Sensor> &sensors);
/// beta -> local observations of the local solve with fixed interface data.
ForwardMap local_forward(const Problem &problem, int subdomain, const VaeModel &vae,
                         const std::map<int, Eigen::VectorXd> &interface_values,
                         const std::vector<Sensor> &local_sensors);

struct CostModel {
  double global_seconds = 0.0;
  double local_seconds = 0.0;  // mean over subdomains
  double ratio() const { return global_seconds / local_seconds; }
};

/// Median wall time of repeated global and local forward solves of `field`.
CostModel measure_costs(const Problem &problem, const Field &field, std::size_t repetitions);
/// Global chain length at equal cost: n_local * local / global, at least 1.
std::size_t global_chain_length(std::size_t n_local, const CostModel &cost);

struct InterfaceFit {
  int i = 0;  // subdomain owning the interface line
  int j = 0;  // neighbour providing the data
  AdaptiveResult result;
  std::vector<Point> nodes;  // interface node locations, segment order
  Eigen::VectorXd values;    // GP mean at the nodes
};

/// Adaptive GP model for every ordered pair (i, j), trained on the sensors
/// of D_i and D_j.
std::vector<InterfaceFit> fit_interfaces(const Problem &problem, const ObservationSet &obs);

/// Dirichlet data of every interface of `subdomain`, keyed by neighbour.
std::map<int, Eigen::VectorXd> interface_dirichlet(const std::vector<InterfaceFit> &fits,
                                                  int subdomain);

struct InterfaceErrors {
  std::vector<std::pair<std::pair<int, int>, double>> eps_int;
  std::vector<double> eps_state;  // per subdomain, 1-based index k at position k-1
};

/// Interface trace errors against the truth state and local state errors of
/// GP-driven versus exact interface data, both with the truth's local field.
InterfaceErrors interface_state_errors(const std::vector<InterfaceFit> &fits,
                                       const ObservationData &data, const Problem &problem);

struct ChainRecord {
  std::string method;
  int domain = 0;  // 0 for the global domain
  double gamma = 0.0;
  std::size_t n_steps = 0;
  double acceptance = 0.0;
  std::size_t forward_evaluations = 0;
  double seconds = 0.0;
};

ChainRecord chain_record(const std::string &method, int domain, const Chain &chain, double seconds);

/// Rows of `chain.samples` after discarding the first burn_in fraction.
Eigen::MatrixXd post_burn_in(const Chain &chain, double burn_in);
/// Decodes every latent row into a field row.
Eigen::MatrixXd decode_samples(const VaeModel &vae, const Eigen::MatrixXd &latents,
                               Exec exec = Exec::parallel);

struct GlobalResult {
  Chain chain;
  ChainRecord record;
  Eigen::MatrixXd samples;  // decoded post-burn-in fields, one per row
  PosteriorStats stats;
};

GlobalResult run_g_vae_mcmc(const Problem &problem, const VaeModel &vae, const ObservationSet &obs,
                            std::size_t n_steps);

struct LocalChains {
  std::vector<Chain> chains;  // subdomain k at position k-1
  std::vector<ChainRecord> records;
};

LocalChains run_local_chains(const Problem &problem, const VaeModel &vae, const ObservationSet &obs,
                             const std::vector<InterfaceFit> &fits);

struct DdResult {
  LocalChains local;
  std::vector<Eigen::MatrixXd> local_samples;  // decoded local fields per subdomain
  Eigen::MatrixXd blended;                     // global fields, one per row
  Eigen::MatrixXd stitched;
  PosteriorStats ble;
  PosteriorStats sti;
};

/// Pairs post-burn-in local samples by index, blends (M = 2) and stitches
/// them, and computes both sets of statistics. With M = 1 the local samples
/// are already global and both outputs equal them.
DdResult combine_local_samples(const Problem &problem, const VaeModel &vae, LocalChains chains);

DdResult run_dd_vae_mcmc(const Problem &problem, const VaeModel &vae, const ObservationSet &obs,
                         const std::vector<InterfaceFit> &fits);

/// Directory layout of one experiment.
struct Workspace {
  std::filesystem::path root;

  std::filesystem::path dataset() const { return root / "dataset"; }
  std::filesystem::path truth() const { return root / "truth.fld"; }
  std::filesystem::path state() const { return root / "truth_state.fld"; }
  std::filesystem::path sensors() const { return root / "sensors.csv"; }
  std::filesystem::path observations() const { return root / "observations.json"; }
  std::filesystem::path vae(const std::string &scope) const { return root / ("vae_" + scope + ".bin"); }
  std::filesystem::path interfaces() const { return root / "interfaces.json"; }
  std::filesystem::path chains(const std::string &method) const { return root / ("chains_" + method); }
  std::filesystem::path samples(const std::string &name) const { return root / (name + "_samples.mat"); }
  std::filesystem::path stats() const { return root / "stats"; }
  std::filesystem::path tables() const { return root / "tables"; }
};

/// File-driven stages behind the command-line tool. Each reads the products
/// of the earlier ones from the workspace and writes its own.
namespace stages {
void generate_data(const ExperimentConfig &config);
void train_vae(const ExperimentConfig &config, const std::string &scope);  // "global" or "local"
void fit_interfaces(const ExperimentConfig &config);
void invert(const ExperimentConfig &config, const std::string &method);   // "dd" or "global"
void blend(const ExperimentConfig &config);
void stats(const ExperimentConfig &config);
void report(const ExperimentConfig &config);
}  // namespace stages

/// Everything of one in-memory experiment.
struct ExperimentResult {
  ObservationData data;
  std::vector<InterfaceFit> fits;
  InterfaceErrors interface_errors;
  DdResult dd;
  double eps_ble = 0.0;
  double eps_sti = 0.0;
  double seam_ble = 0.0;
  double seam_sti = 0.0;
  std::vector<double> local_loss;  // DD-VAE epoch losses
  CostModel cost;
};

/// Data generation, DD-VAE training, interface fits, local chains,
/// blending and error metrics, without touching the disk.
ExperimentResult run_dd_experiment(const ExperimentConfig &config);

}  // namespace ddvae
