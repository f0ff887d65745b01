// Command-line front end: fit, eval, simulate, diagnose, cayley, validate.
//
// Exit codes: 0 ok, 2 usage or parse error, 3 numerical divergence,
// 4 resource guard exceeded.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rsrank/rsrank.hpp"

namespace {

using namespace rsrank;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitGuard = 4;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::diverged: return kExitDiverged;
    case ErrorKind::dimension_guard: return kExitGuard;
    default: return kExitUsage;
  }
}

struct FitFlags {
  std::string model = "pl";
  std::optional<int> rank;
  int epochs = 10;
  double lr = 0.001;
  std::string batch = "1";
  std::uint64_t seed = 0;
  unsigned threads = 1;

  FitConfig config() const {
    FitConfig cfg;
    cfg.learning_rate = lr;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.rank = rank;
    cfg.threads = threads;
    if (batch != "full") {
      std::size_t pos = 0;
      long long b = -1;
      try {
        b = std::stoll(batch, &pos);
      } catch (const std::exception&) {
      }
      if (b < 1 || pos != batch.size()) {
        throw Error(ErrorKind::invalid_argument,
                    "--batch must be a positive integer or 'full'");
      }
      cfg.batch_size = static_cast<std::size_t>(b);
    }
    return cfg;
  }

  ModelKind kind() const {
    const auto k = parse_model_kind(model);
    if (k == ModelKind::crs_factor && !rank) {
      throw Error(ErrorKind::invalid_argument, "--model crs-factor requires --rank");
    }
    return k;
  }
};

void add_fit_flags(CLI::App* cmd, FitFlags& f, bool with_model = true) {
  if (with_model) {
    cmd->add_option("--model", f.model, "Model family")
        ->check(CLI::IsMember({"pl", "crs-full", "crs-factor", "mallows"}))
        ->required();
  }
  cmd->add_option("--rank", f.rank, "Embedding rank (crs-factor only)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--epochs", f.epochs, "Adam epochs")->capture_default_str();
  cmd->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--batch", f.batch, "Mini-batch size in choices, or 'full'")
      ->capture_default_str();
  cmd->add_option("--seed", f.seed, "Random seed")->capture_default_str();
  cmd->add_option("--threads", f.threads, "Worker threads (0 = all cores)")
      ->capture_default_str();
}

void log_config(const std::string& cmd,
                const std::vector<std::pair<std::string, std::string>>& kv) {
  std::cerr << "rsrank " << cmd;
  for (const auto& [k, v] : kv) std::cerr << " " << k << "=" << v;
  std::cerr << "\n";
}

std::string describe(const FitFlags& f) {
  return "model=" + f.model + " rank=" + (f.rank ? std::to_string(*f.rank) : "none") +
         " epochs=" + std::to_string(f.epochs) + " lr=" + format_double(f.lr) +
         " batch=" + f.batch + " seed=" + std::to_string(f.seed);
}

RankingDataset load_dataset(const std::string& path) {
  auto ds = read_preflib(path);
  require_valid(ds);
  return ds;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::string sibling_path(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  const auto stem = p.stem().string();
  const auto ext = p.has_extension() ? p.extension().string() : std::string(".csv");
  return (p.parent_path() / (stem + suffix + ext)).string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Repeated-selection ranking models: fit, evaluate, simulate, diagnose"};
  app.require_subcommand(1);

  // fit
  FitFlags fit_flags;
  std::string fit_data, fit_out;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a Preflib SOC/SOI file");
  fit_cmd->add_option("--data", fit_data, "Preflib data file")->required();
  fit_cmd->add_option("--out", fit_out, "Output parameter document")->required();
  add_fit_flags(fit_cmd, fit_flags);

  // eval
  FitFlags eval_flags;
  std::string eval_data, eval_out;
  int eval_folds = 5;
  auto* eval_cmd = app.add_subcommand("eval", "K-fold cross-validated test NLL");
  eval_cmd->add_option("--data", eval_data, "Preflib data file")->required();
  eval_cmd->add_option("--out", eval_out, "Output CSV")->required();
  eval_cmd->add_option("--folds", eval_folds, "Number of folds")->capture_default_str();
  add_fit_flags(eval_cmd, eval_flags);

  // simulate
  std::string sim_model = "pl", sim_out;
  std::vector<int> sim_n;
  std::vector<std::size_t> sim_ell;
  std::optional<int> sim_rank;
  double sim_b = 1.5;
  int sim_trials = 20;
  std::uint64_t sim_seed = 0;
  int sim_epochs = 6000;
  double sim_lr = 0.05, sim_final_lr = 1e-5, sim_tol = 1e-9;
  unsigned sim_threads = 0;
  auto* sim_cmd = app.add_subcommand("simulate", "Squared-l2 risk vs dataset size");
  sim_cmd->add_option("--model", sim_model, "Model family")
      ->check(CLI::IsMember({"pl", "crs-full", "crs-factor"}))
      ->required();
  sim_cmd->add_option("--n", sim_n, "Universe sizes")->delimiter(',')->required();
  sim_cmd->add_option("--ell", sim_ell, "Dataset sizes, increasing")
      ->delimiter(',')
      ->required();
  sim_cmd->add_option("--rank", sim_rank, "Embedding rank (crs-factor only)")
      ->check(CLI::PositiveNumber);
  sim_cmd->add_option("--B", sim_b, "Ground-truth ball radius")->capture_default_str();
  sim_cmd->add_option("--trials", sim_trials, "Datasets per n")->capture_default_str();
  sim_cmd->add_option("--seed", sim_seed, "Random seed")->capture_default_str();
  sim_cmd->add_option("--epochs", sim_epochs, "Full-batch Adam epochs per fit")
      ->capture_default_str();
  sim_cmd->add_option("--lr", sim_lr, "Initial learning rate")->capture_default_str();
  sim_cmd->add_option("--final-lr", sim_final_lr, "Final learning rate")
      ->capture_default_str();
  sim_cmd->add_option("--grad-tol", sim_tol, "Early-stopping gradient tolerance")
      ->capture_default_str();
  sim_cmd->add_option("--threads", sim_threads, "Worker threads (0 = all cores)")
      ->capture_default_str();
  sim_cmd->add_option("--out", sim_out, "Output risk table CSV")->required();

  // diagnose
  std::string diag_data, diag_model = "pl", diag_out;
  double diag_b = 1.5;
  auto* diag_cmd = app.add_subcommand("diagnose", "Spectral identifiability certificate");
  diag_cmd->add_option("--data", diag_data, "Preflib data file")->required();
  diag_cmd->add_option("--model", diag_model, "pl or crs")
      ->check(CLI::IsMember({"pl", "crs"}))
      ->capture_default_str();
  diag_cmd->add_option("--B", diag_b, "Parameter ball radius for bound lines")
      ->capture_default_str();
  diag_cmd->add_option("--out", diag_out, "Output certificate CSV")->required();

  // cayley
  int cay_n = 0;
  std::vector<std::string> cay_params;
  std::string cay_out;
  auto* cay_cmd = app.add_subcommand("cayley", "Export the Cayley graph of S_n with model probabilities");
  cay_cmd->add_option("--n", cay_n, "Universe size (<= 6)")->required();
  cay_cmd->add_option("--params", cay_params, "Parameter documents")->delimiter(',');
  cay_cmd->add_option("--out", cay_out, "Output DOT path (node CSV at <out>.csv)")
      ->required();

  // validate
  std::string val_data;
  auto* val_cmd = app.add_subcommand("validate", "Check a Preflib file for dataset violations");
  val_cmd->add_option("--data", val_data, "Preflib data file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*fit_cmd) {
      log_config("fit", {{"data", fit_data}, {"out", fit_out}, {"config", describe(fit_flags)}});
      const auto kind = fit_flags.kind();
      const auto cfg = fit_flags.config();
      const auto ds = load_dataset(fit_data);
      const auto report = fit(kind, ds, cfg);
      write_params(report.final_params, fit_out);
      std::cout << "train_nll_per_ranking " << format_double(report.train_nll_per_ranking)
                << "\ntrain_nll_per_choice " << format_double(report.train_nll_per_choice)
                << "\n";
      return kExitOk;
    }

    if (*eval_cmd) {
      log_config("eval", {{"data", eval_data},
                          {"out", eval_out},
                          {"folds", std::to_string(eval_folds)},
                          {"config", describe(eval_flags)}});
      const auto kind = eval_flags.kind();
      const auto cfg = eval_flags.config();
      const auto ds = load_dataset(eval_data);
      const auto cv = kfold_eval(ds, kind, eval_folds, cfg, eval_flags.seed, eval_flags.threads);
      Table t;
      t.header = {"record", "model", "folds", "position", "mean", "sem", "count"};
      t.add({std::string("summary"), std::string(to_string(kind)), std::int64_t{cv.folds},
             std::string(), cv.mean_test_nll_per_ranking, cv.sem,
             std::int64_t{ds.total_weight()}});
      for (std::size_t k = 0; k < cv.position_profile.per_position.size(); ++k) {
        const auto& p = cv.position_profile.per_position[k];
        t.add({std::string("position"), std::string(to_string(kind)),
               std::int64_t{cv.folds}, static_cast<std::int64_t>(k + 1),
               p.mean_log_likelihood, std::string(), p.count});
      }
      write_results_csv(t, eval_out);
      std::cout << "mean_test_nll_per_ranking "
                << format_double(cv.mean_test_nll_per_ranking) << " sem "
                << format_double(cv.sem) << "\n";
      return kExitOk;
    }

    if (*sim_cmd) {
      log_config("simulate", {{"model", sim_model},
                              {"n", join(sim_n)},
                              {"ell", join(sim_ell)},
                              {"rank", sim_rank ? std::to_string(*sim_rank) : "none"},
                              {"B", format_double(sim_b)},
                              {"trials", std::to_string(sim_trials)},
                              {"seed", std::to_string(sim_seed)},
                              {"epochs", std::to_string(sim_epochs)},
                              {"lr", format_double(sim_lr)},
                              {"final_lr", format_double(sim_final_lr)},
                              {"grad_tol", format_double(sim_tol)}});
      RiskExperimentConfig cfg;
      cfg.model_kind = parse_model_kind(sim_model);
      cfg.n_grid = sim_n;
      cfg.ell_grid = sim_ell;
      cfg.rank = sim_rank;
      cfg.b = sim_b;
      cfg.trials = sim_trials;
      cfg.seed = sim_seed;
      cfg.threads = sim_threads;
      cfg.fit_cfg.epochs = sim_epochs;
      cfg.fit_cfg.learning_rate = sim_lr;
      cfg.fit_cfg.final_learning_rate = sim_final_lr;
      cfg.fit_cfg.gradient_tolerance = sim_tol;
      const auto rows = risk_experiment(cfg);
      Table t;
      t.header = {"n", "ell", "trial", "squared_l2_risk"};
      for (const auto& r : rows) {
        t.add({std::int64_t{r.n}, static_cast<std::int64_t>(r.ell), std::int64_t{r.trial},
               r.squared_l2_risk});
      }
      write_results_csv(t, sim_out);
      if (sim_trials >= 10) {
        Table s;
        s.header = {"n", "ell", "trials", "median", "q1", "q3", "iqr", "max", "max_over_median"};
        for (const auto& b : tail_bundle_stats(rows)) {
          s.add({std::int64_t{b.n}, static_cast<std::int64_t>(b.ell), std::int64_t{b.trials},
                 b.median, b.q1, b.q3, b.iqr, b.max, b.max_over_median});
        }
        write_results_csv(s, sibling_path(sim_out, "_spread"));
      } else {
        std::cerr << "fewer than 10 trials: spread summary not written\n";
      }
      return kExitOk;
    }

    if (*diag_cmd) {
      log_config("diagnose", {{"data", diag_data},
                              {"model", diag_model},
                              {"B", format_double(diag_b)},
                              {"out", diag_out}});
      const auto ds = load_dataset(diag_data);
      const auto kind = diag_model == "pl" ? ModelKind::pl : ModelKind::crs_full;
      const auto cert = certify(ds, kind, diag_b);
      Table t;
      t.header = {"key", "value", "holds"};
      t.add({std::string("matrix_kind"), std::string(to_string(cert.matrix_kind)), std::string()});
      t.add({std::string("dim"), static_cast<std::int64_t>(cert.dim), std::string()});
      t.add({std::string("lambda2"), cert.lambda2, std::string()});
      t.add({std::string("lambda_max"), cert.lambda_max, std::string()});
      t.add({std::string("connected_or_identified"),
             std::string(cert.connected_or_identified ? "true" : "false"), std::string()});
      for (const auto& b : cert.bound_checks) {
        t.add({"bound:" + b.name, b.bound_value, std::string(b.holds ? "true" : "false")});
      }
      write_results_csv(t, diag_out);
      return kExitOk;
    }

    if (*cay_cmd) {
      log_config("cayley", {{"n", std::to_string(cay_n)},
                            {"params", [&] {
                               std::string s;
                               for (const auto& p : cay_params) s += (s.empty() ? "" : ",") + p;
                               return s;
                             }()},
                            {"out", cay_out}});
      if (cay_n > kMaxCayleyN || cay_n < 2) {
        std::cerr << "error: --n must lie in [2, " << kMaxCayleyN << "]\n";
        return kExitUsage;
      }
      std::vector<TaggedParams> models;
      std::map<std::string, int> seen;
      for (const auto& path : cay_params) {
        auto params = read_params(path);
        std::string tag(to_string(kind_of(params)));
        std::replace(tag.begin(), tag.end(), '-', '_');
        if (++seen[tag] > 1) tag += "_" + std::to_string(seen[tag]);
        models.push_back({tag, std::move(params)});
      }
      export_cayley(models, cay_n, cay_out);
      return kExitOk;
    }

    if (*val_cmd) {
      log_config("validate", {{"data", val_data}});
      const auto ds = read_preflib(val_data);
      const auto report = validate_dataset(ds);
      for (const auto& v : report.violations) {
        std::cerr << "ranking " << v.ranking_index << ": " << v.message << "\n";
      }
      std::cout << (report.ok() ? "ok" : "invalid") << " rankings=" << report.total_weight
                << "\n";
      return report.ok() ? kExitOk : kExitUsage;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
