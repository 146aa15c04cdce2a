// Command-line front end: snapshot generation, POD/MFPOD on MFP1 files,
// the advection-diffusion study and the convergence checks.

#include "mfpod/all.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mfpod;

namespace {

struct Shared {
  double budget = 5.0;
  double kappa = 0.9999;
  std::uint64_t seed = 0;
  Index repeats = 100;
  std::string alpha = "1";
  std::string split = "even";
  std::string model = "boundary-layer";
  std::string out = ".";
  Index n_hf = 4097;
  Index n_lf = 33;
};

void add_model_flags(CLI::App* cmd, Shared& s) {
  cmd->add_option("--model", s.model, "literal | boundary-layer")->capture_default_str();
  cmd->add_option("--n-hf", s.n_hf, "high-fidelity dofs")->capture_default_str();
  cmd->add_option("--n-lf", s.n_lf, "low-fidelity dofs")->capture_default_str();
}

models::AdvDiffConfig model_config(const Shared& s) {
  models::AdvDiffConfig cfg;
  cfg.advection_sign = models::parse_advection_sign(s.model);
  cfg.n_hf = s.n_hf;
  cfg.n_lf = s.n_lf;
  cfg.validate();
  return cfg;
}

Metric metric_for(const std::string& name, Index n) {
  if (name == "l2") return models::l2_metric(n);
  if (name == "euclidean") return Metric::euclidean(n);
  throw std::invalid_argument("unknown metric '" + name + "' (expected l2|euclidean)");
}

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void emit(const fs::path& dir, const std::string& name, const json& j) {
  fs::create_directories(dir);
  io::write_atomic(dir / name, j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
}

std::string parameters_csv(const std::vector<double>& theta) {
  std::string out = "index,theta\n";
  char buf[64];
  for (std::size_t i = 0; i < theta.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", theta[i]);
    out += std::to_string(i) + "," + buf + "\n";
  }
  return out;
}

int run_generate(const Shared& s) {
  const auto cfg = model_config(s);
  const auto costs = models::ModelCosts::from(cfg);
  const auto sizes = experiment::allocate_budget(s.budget, costs, experiment::SplitPolicy::parse(s.split));
  const auto theta = models::sample_parameters(static_cast<std::size_t>(std::max(sizes.m0, sizes.m1)), s.seed,
                                               cfg.theta_range);
  const fs::path dir = s.out;
  fs::create_directories(dir);
  const std::vector<double> hf_theta(theta.begin(), theta.begin() + sizes.m0);
  const std::vector<double> lf_theta(theta.begin(), theta.begin() + sizes.m1);
  io::write_snapshots(dir / "hf.mfp", models::snapshots(hf_theta, models::Fidelity::high, cfg));
  io::write_snapshots(dir / "lf.mfp", models::snapshots(lf_theta, models::Fidelity::low, cfg));
  io::write_atomic(dir / "parameters.csv", parameters_csv(theta));
  emit(dir, "generate.json",
       {{"m0", sizes.m0},
        {"m1", sizes.m1},
        {"n", cfg.n_hf},
        {"seed", s.seed},
        {"model", models::to_string(cfg.advection_sign)},
        {"files", {"hf.mfp", "lf.mfp", "parameters.csv"}}});
  return 0;
}

int run_pod(const Shared& s, const std::string& input, const std::string& metric_name) {
  const Matrix snaps = io::read_snapshots(input);
  const Metric metric = metric_for(metric_name, snaps.rows());
  const PodResult p = pod(snaps, metric);
  const Index r = select_dimension(p.eigvals, p.basis.dim(), s.kappa);
  const fs::path dir = s.out;
  fs::create_directories(dir);
  io::write_snapshots(dir / "modes.mfp", p.basis.vectors);
  emit(dir, "pod.json",
       {{"snapshots", snaps.cols()},
        {"eigenvalues", to_json(p.eigvals)},
        {"nonzero_modes", p.basis.dim()},
        {"r", r},
        {"kappa", s.kappa}});
  return 0;
}

int run_mfpod(const Shared& s, const std::string& hf_path, const std::string& lf_path,
              const std::string& metric_name, double c1) {
  const Matrix hf = io::read_snapshots(hf_path);
  const Matrix lf = io::read_snapshots(lf_path);
  if (hf.rows() != lf.rows()) throw DimensionError("hf and lf files differ in state dimension");
  const Metric metric = metric_for(metric_name, hf.rows());
  const auto sets = make_two_level(hf, lf, 1.0, c1);
  const auto w = experiment::WeightMode::parse(s.alpha);

  MfBasis mf;
  json trace = nullptr;
  double alpha = w.alpha;
  if (w.kind == experiment::WeightKind::adaptive) {
    AdaptiveResult a = mfpod_adaptive(sets, s.kappa, metric);
    mf = std::move(a.basis);
    trace = json::array();
    for (const auto& st : a.trace.steps) {
      trace.push_back({{"j", st.j},
                       {"alpha", st.alpha},
                       {"lambda", st.lambda},
                       {"lambda_plus", st.lambda_plus},
                       {"residual", st.residual},
                       {"corrected", st.corrected}});
    }
    alpha = a.trace.steps.empty() ? 0.0 : a.trace.steps.back().alpha;
  } else {
    if (w.kind == experiment::WeightKind::pilot) alpha = adaptive_weight(Basis::empty(metric), sets);
    mf = mfpod_fixed(sets, {alpha}, s.kappa, metric);
  }
  const fs::path dir = s.out;
  fs::create_directories(dir);
  io::write_snapshots(dir / "modes.mfp", mf.vectors.leftCols(mf.r));
  json j = {{"m0", hf.cols()},
            {"m1", lf.cols()},
            {"alpha", alpha},
            {"eigenvalues", to_json(mf.raw_eigvals)},
            {"corrected_eigenvalues", to_json(mf.corrected)},
            {"nonzero_modes", mf.nonzero_count},
            {"corrections", mf.correction_count},
            {"orthogonal_modes", mf.orthogonal_count},
            {"r", mf.r},
            {"kappa", s.kappa},
            {"energy_fraction", mf.energy_fraction}};
  if (!mf.diagnostic.empty()) j["diagnostic"] = mf.diagnostic;
  if (!trace.is_null()) j["adaptive_trace"] = trace;
  emit(dir, "mfpod.json", j);
  return 0;
}

int run_study(const Shared& s, Index reference_size, Index max_dim, unsigned threads, bool no_baselines) {
  experiment::StudyConfig cfg;
  cfg.budget = s.budget;
  cfg.split = experiment::SplitPolicy::parse(s.split);
  cfg.kappa = s.kappa;
  cfg.repeats = s.repeats;
  cfg.master_seed = s.seed;
  cfg.model = model_config(s);
  cfg.weight = experiment::WeightMode::parse(s.alpha);
  cfg.reference_size = reference_size;
  cfg.max_dim = max_dim;
  cfg.threads = threads;
  cfg.baselines = !no_baselines;
  cfg.output_dir = s.out;
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = experiment::run_study(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json summary = json::array();
  for (const auto& m : report.summaries) {
    summary.push_back({{"method", m.method},
                       {"successes", m.successes},
                       {"median_nonzero_modes", m.median_nonzero},
                       {"median_r", m.median_r}});
  }
  std::cout << json{{"out", s.out}, {"failures", report.failures}, {"summaries", summary}}.dump(2) << "\n";
  std::cerr << "study wall time " << secs << " s\n";
  return 0;
}

std::vector<Index> parse_grid(const std::string& text) {
  std::vector<Index> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const long long v = std::stoll(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad m0 grid entry '" + item + "'");
    grid.push_back(static_cast<Index>(v));
  }
  return grid;
}

int run_verify(const Shared& s, Index q1, const std::string& grid_text, Index r, Index reference_size) {
  const models::AdvDiffPair pair(model_config(s));
  const auto grid = parse_grid(grid_text);
  const auto w = experiment::WeightMode::parse(s.alpha);
  if (w.kind != experiment::WeightKind::fixed) throw std::invalid_argument("verify needs a numeric --alpha");
  const verify::StudyOptions opts{w.alpha, reference_size};
  const auto ref = verify::reference_moment(pair, reference_size);
  const auto conv = verify::convergence_study(pair, q1, grid, s.repeats, s.seed, ref, opts);
  const auto eig = verify::eigenvalue_sum_mse(pair, r, grid, q1, s.repeats, s.seed, conv.gamma_hat, ref, opts);
  json j = {{"m0_grid", conv.m0_grid},
            {"q1", q1},
            {"repeats", conv.repeats},
            {"seed", s.seed},
            {"hs_error_mean_sq", conv.hs_errors},
            {"hs_error_standard_error", conv.standard_errors},
            {"gamma_hat", conv.gamma_hat},
            {"slope", conv.exact ? json(nullptr) : json(conv.slope)},
            {"exact", conv.exact},
            {"eigenvalue_sum",
             {{"r", r},
              {"mse", eig.mse},
              {"bound", eig.bound},
              {"alignment_mean_sq", eig.alignment_msq},
              {"alignment_bound", eig.alignment_bound},
              {"median_energy_ratio", eig.median_energy_ratio},
              {"reference_energy_ratio", eig.reference_energy_ratio},
              {"spectral_gap", eig.spectral_gap},
              {"max_symmetry_gap", eig.max_symmetry_gap}}}};
  emit(s.out, "verify.json", j);
  return 0;
}

void error_json(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", message}, {"kind", kind}}.dump() << "\n";
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multifidelity proper orthogonal decomposition"};
  app.require_subcommand(1);
  Shared s;

  auto* gen = app.add_subcommand("generate", "write HF/LF snapshot files for a budget split");
  gen->add_option("--budget", s.budget)->capture_default_str();
  gen->add_option("--split", s.split)->capture_default_str();
  gen->add_option("--seed", s.seed)->capture_default_str();
  gen->add_option("--out", s.out, "output directory")->capture_default_str();
  add_model_flags(gen, s);

  std::string input, hf_path, lf_path, metric_name = "l2";
  double c1 = 33.0 / 4097.0;
  auto* podc = app.add_subcommand("pod", "single-fidelity POD of an MFP1 file");
  podc->add_option("--input", input, "snapshot file")->required();
  podc->add_option("--metric", metric_name, "l2 | euclidean")->capture_default_str();
  podc->add_option("--kappa", s.kappa)->capture_default_str();
  podc->add_option("--out", s.out)->capture_default_str();

  auto* mfc = app.add_subcommand("mfpod", "multifidelity POD of HF/LF snapshot files");
  mfc->add_option("--hf", hf_path, "high-fidelity snapshots (first m0 samples)")->required();
  mfc->add_option("--lf", lf_path, "low-fidelity snapshots (m1 samples, first m0 shared)")->required();
  mfc->add_option("--metric", metric_name, "l2 | euclidean")->capture_default_str();
  mfc->add_option("--alpha", s.alpha, "value | pilot | adaptive")->capture_default_str();
  mfc->add_option("--kappa", s.kappa)->capture_default_str();
  mfc->add_option("--c1", c1, "low-fidelity cost per sample")->capture_default_str();
  mfc->add_option("--out", s.out)->capture_default_str();

  Index reference_size = 10000, max_dim = 30;
  unsigned threads = 1;
  bool no_baselines = false;
  auto* st = app.add_subcommand("study", "repeated advection-diffusion study with reports");
  st->add_option("--budget", s.budget)->capture_default_str();
  st->add_option("--kappa", s.kappa)->capture_default_str();
  st->add_option("--seed", s.seed)->capture_default_str();
  st->add_option("--repeats", s.repeats)->capture_default_str();
  st->add_option("--alpha", s.alpha, "value | pilot | adaptive")->capture_default_str();
  st->add_option("--split", s.split, "even | m0=K | hf-only | lf-only")->capture_default_str();
  st->add_option("--out", s.out)->capture_default_str();
  st->add_option("--reference-size", reference_size)->capture_default_str();
  st->add_option("--max-dim", max_dim)->capture_default_str();
  st->add_option("--threads", threads)->capture_default_str();
  st->add_flag("--no-baselines", no_baselines, "skip the hf-only and lf-only POD baselines");
  add_model_flags(st, s);

  Index q1 = 4, r = 3, verify_reference = 10000;
  std::string grid = "2,4,8,16,32";
  auto* ver = app.add_subcommand("verify", "convergence-rate and eigenvalue-sum checks");
  ver->add_option("--seed", s.seed)->capture_default_str();
  ver->add_option("--repeats", s.repeats)->capture_default_str();
  ver->add_option("--alpha", s.alpha)->capture_default_str();
  ver->add_option("--out", s.out)->capture_default_str();
  ver->add_option("--q1", q1)->capture_default_str();
  ver->add_option("--m0-grid", grid)->capture_default_str();
  ver->add_option("--r", r)->capture_default_str();
  ver->add_option("--reference-size", verify_reference)->capture_default_str();
  add_model_flags(ver, s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    error_json("usage", e.what());
    return 2;
  }

  try {
    if (*gen) return run_generate(s);
    if (*podc) return run_pod(s, input, metric_name);
    if (*mfc) return run_mfpod(s, hf_path, lf_path, metric_name, c1);
    if (*st) return run_study(s, reference_size, max_dim, threads, no_baselines);
    if (*ver) {
      s.n_hf = ver->count("--n-hf") ? s.n_hf : 129;
      s.n_lf = ver->count("--n-lf") ? s.n_lf : 17;
      return run_verify(s, q1, grid, r, verify_reference);
    }
  } catch (const io::CorruptFileError& e) {
    error_json("corrupt_file", e.what());
    return 1;
  } catch (const experiment::BudgetError& e) {
    error_json("budget", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    error_json("invalid_argument", e.what());
    return 1;
  } catch (const std::exception& e) {
    error_json("runtime", e.what());
    return 1;
  }
  return 1;
}
