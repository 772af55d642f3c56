#include "cip/cli.hpp"

#include "cip/serialize.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace cip {

namespace fs = std::filesystem;

namespace {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  return parts;
}

}  // namespace

std::vector<double> parse_number_list(const std::string& text, const std::string& key) {
  std::vector<double> values;
  for (const auto& part : split_commas(text)) {
    double v = 0;
    const auto* end = part.data() + part.size();
    auto [ptr, ec] = std::from_chars(part.data(), end, v);
    if (part.empty() || ec != std::errc() || ptr != end || !std::isfinite(v))
      throw std::invalid_argument(key + ": '" + part + "' is not a number");
    values.push_back(v);
  }
  if (values.empty()) throw std::invalid_argument(key + ": list is empty");
  return values;
}

std::vector<int> parse_hidden(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty() || t == "none") return {};
  std::vector<int> dims;
  for (const auto& part : split_commas(t)) {
    int v = 0;
    const auto* end = part.data() + part.size();
    auto [ptr, ec] = std::from_chars(part.data(), end, v);
    if (part.empty() || ec != std::errc() || ptr != end || v < 1)
      throw std::invalid_argument("hidden: '" + part + "' is not a positive width");
    dims.push_back(v);
  }
  return dims;
}

namespace {

struct Context {
  RunConfig cfg;
  std::ostream& out;
  std::ostream& err;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

fs::path checkpoint_path(const RunConfig& cfg) {
  return cfg.checkpoint.empty() ? fs::path(cfg.out) / "checkpoint.json" : fs::path(cfg.checkpoint);
}

/// Loaded or generated data, always carrying a split assignment.
Dataset obtain_dataset(const RunConfig& cfg) {
  Dataset ds = cfg.dataset.empty() ? generate(cfg.synthetic) : load(cfg.dataset);
  if (!ds.has_split()) ds = split(ds, cfg.train_fraction, cfg.synthetic.seed);
  return ds;
}

Dataset select_split(const Dataset& ds, const std::string& which) {
  if (which == "all") return ds;
  return ds.subset(which == "train" ? Split::train : Split::test);
}

void print_divergence(std::ostream& err, const Divergence& d) {
  err << "divergence: " << d.reason << "\n";
}

int cmd_generate(Context& ctx) {
  const auto& cfg = ctx.cfg;
  Dataset ds = split(generate(cfg.synthetic), cfg.train_fraction, cfg.synthetic.seed);
  const fs::path path = cfg.dataset.empty() ? fs::path(cfg.out) / "dataset.csv" : fs::path(cfg.dataset);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save(ds, path);
  ctx.out << "wrote " << ds.size() << " views to " << path.string() << "\n";
  return kExitOk;
}

int cmd_train(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const Dataset ds = obtain_dataset(cfg);
  const Dataset train_set = ds.subset(Split::train);
  const Dataset test_set = ds.subset(Split::test);
  TrainResult result = train(train_set, cfg.train, &test_set);

  const fs::path dir(cfg.out);
  save_checkpoint(result.state, checkpoint_path(cfg));
  auto history = open_out(dir / "history.csv");
  write_history_csv(history, result.state.history);

  for (const auto& r : result.state.history) {
    ctx.out << "epoch " << r.epoch << " lr " << r.lr << " loss " << r.total;
    if (r.test_map) ctx.out << " test_map " << *r.test_map;
    ctx.out << "\n";
  }
  if (result.divergence) {
    print_divergence(ctx.err, *result.divergence);
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_eval(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const TrainState state = load_checkpoint(checkpoint_path(cfg));
  const Dataset data = select_split(obtain_dataset(cfg), cfg.split);
  const EvaluationSummary summary = evaluate_retrieval(state.model, data, cfg.eval);

  const fs::path dir(cfg.out);
  auto metrics = open_out(dir / "metrics.json");
  write_metrics_json(metrics, summary);

  const auto labels = data.class_indices();
  if (data.num_classes() > state.model.bank.num_classes())
    throw std::runtime_error("dataset has more classes than the checkpoint");
  const GeometryReport geo = geometry_report(embed(state.model.encoder, data), labels,
                                             state.model.bank);
  auto geo_csv = open_out(dir / "geometry.csv");
  write_geometry_csv(geo_csv, geo);
  auto geo_json = open_out(dir / "geometry.json");
  write_geometry_json(geo_json, geo);
  auto cos_csv = open_out(dir / "centerline_cosines.csv");
  write_cosine_matrix_csv(cos_csv, geo.centerline_cosines);

  for (const auto& w : summary.warnings) ctx.err << "warning: " << w << "\n";
  ctx.out << "map " << summary.micro.map << " pr_auc " << summary.micro.pr_auc << " f1 "
          << summary.micro.f1 << " ndcg " << summary.micro.ndcg << "\n";
  ctx.out << "macro_map " << summary.macro.map << "\n";
  ctx.out << "max_centerline_cosine " << geo.max_centerline_cosine << " mean_own_cosine "
          << geo.mean_own_cosine << "\n";
  return kExitOk;
}

int cmd_export(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const TrainState state = load_checkpoint(checkpoint_path(cfg));
  const Dataset data = select_split(obtain_dataset(cfg), cfg.split);
  const MatrixXd views = embed(state.model.encoder, data);

  auto csv = open_out(fs::path(cfg.out) / "embeddings.csv");
  const auto n = views.rows();
  csv << "id,label";
  for (Eigen::Index t = 0; t < n; ++t) csv << ",e" << t;
  csv << "\n";
  std::size_t rows = 0;
  if (cfg.pooled) {
    const auto pooled = pool_by_object(views, data);
    for (std::size_t o = 0; o < pooled.object_ids.size(); ++o, ++rows) {
      csv << pooled.object_ids[o] << ',' << pooled.labels[o] + 1;
      for (Eigen::Index t = 0; t < n; ++t)
        csv << ',' << format_double(pooled.descriptors(t, static_cast<Eigen::Index>(o)));
      csv << "\n";
    }
  } else {
    for (std::size_t i = 0; i < data.size(); ++i, ++rows) {
      csv << i << ',' << data.records()[i].label;
      for (Eigen::Index t = 0; t < n; ++t)
        csv << ',' << format_double(views(t, static_cast<Eigen::Index>(i)));
      csv << "\n";
    }
  }
  ctx.out << "wrote " << rows << (cfg.pooled ? " object" : " view") << " embeddings\n";
  return kExitOk;
}

double spread(const std::vector<double>& v) {
  if (v.empty()) return 0;
  return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
}

double variance(const std::vector<double>& v) {
  if (v.empty()) return 0;
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double acc = 0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(v.size());
}

int cmd_sweep(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto lambdas = parse_number_list(cfg.lambdas, "lambdas");
  const auto ds_values = parse_number_list(cfg.ds, "ds");
  const Dataset ds = obtain_dataset(cfg);
  const Dataset train_set = ds.subset(Split::train);
  const Dataset test_set = ds.subset(Split::test);

  auto csv = open_out(fs::path(cfg.out) / "sweep.csv");
  csv << "d,lambda,converged,final_loss,map,reason\n";
  bool all_converged = true;
  for (double d : ds_values) {
    std::vector<double> maps;
    for (double lambda : lambdas) {
      TrainConfig tc = cfg.train;
      tc.loss.lambda = lambda;
      tc.loss.d = d;
      tc.validate();
      const TrainResult r = train(train_set, tc);
      const double final_loss = r.state.history.empty() ? NAN : r.state.history.back().total;
      const bool converged = !r.divergence && std::isfinite(final_loss);
      double map = NAN;
      if (converged) {
        map = evaluate_retrieval(r.state.model, test_set, cfg.eval).micro.map;
        maps.push_back(map);
      }
      all_converged = all_converged && converged;
      csv << format_double(d) << ',' << format_double(lambda) << ',' << (converged ? 1 : 0) << ','
          << format_double(final_loss) << ',' << format_double(map) << ','
          << (r.divergence ? r.divergence->reason : "") << "\n";
      ctx.out << "d " << d << " lambda " << lambda << (converged ? " converged" : " DIVERGED")
              << " map " << map << "\n";
    }
    ctx.out << "d " << d << " map spread " << spread(maps) << " variance " << variance(maps)
            << "\n";
  }
  return all_converged ? kExitOk : kExitRuntime;
}

LossConfig build_loss(const std::string& preset, const CLI::Option* lambda, double lambda_v,
                      const CLI::Option* d, double d_v, const CLI::Option* sw, double sw_v,
                      const CLI::Option* cw, double cw_v) {
  LossConfig lc;
  try {
    lc = loss_preset(preset);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (lambda->count()) lc.lambda = lambda_v;
  if (d->count()) lc.d = d_v;
  if (sw->count()) lc.softmax_weight = sw_v;
  if (cw->count()) lc.center_weight = cw_v;
  return lc;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Collaborative inner product loss: training and retrieval benchmark"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value config file; command-line flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.get_formatter()->column_width(36);

  RunConfig cfg;
  auto& s = cfg.synthetic;
  auto& t = cfg.train;
  std::string activation = "identity", init = "gaussian";
  double lambda = t.loss.lambda, d = t.loss.d;
  double softmax_weight = t.loss.softmax_weight, center_weight = t.loss.center_weight;
  std::uint64_t seed = 1;

  app.add_option("--out", cfg.out, "output directory")->capture_default_str();
  app.add_option("--seed", seed, "seed for data, split and training")->capture_default_str();

  app.add_option("--dataset", cfg.dataset, "dataset CSV (empty: generate from the synthetic keys)")
      ->capture_default_str();
  app.add_option("--num_classes", s.num_classes, "synthetic classes K")->capture_default_str();
  app.add_option("--objects_per_class", s.objects_per_class, "objects per class")
      ->capture_default_str();
  app.add_option("--views_per_object", s.views_per_object, "views per object")
      ->capture_default_str();
  app.add_option("--input_dim", s.input_dim, "view vector dimension D")->capture_default_str();
  app.add_option("--class_separation", s.class_separation, "prototype norm")
      ->capture_default_str();
  app.add_option("--view_noise_std", s.view_noise_std, "per-view noise std")
      ->capture_default_str();
  app.add_option("--object_noise_std", s.object_noise_std, "per-object noise std")
      ->capture_default_str();
  app.add_option("--train_fraction", cfg.train_fraction, "objects per class used for training")
      ->capture_default_str();

  app.add_option("--batch_size", t.batch_size, "views per batch")->capture_default_str();
  app.add_option("--epochs", t.epochs, "training epochs")->capture_default_str();
  app.add_option("--lr0", t.lr0, "initial learning rate")->capture_default_str();
  app.add_option("--lr_drop_epoch", t.lr_drop_epoch, "epoch of the single lr drop")
      ->capture_default_str();
  app.add_option("--lr_drop_factor", t.lr_drop_factor, "lr divisor at the drop")
      ->capture_default_str();
  app.add_option("--momentum", t.momentum, "SGD momentum")->capture_default_str();
  app.add_option("--weight_decay", t.weight_decay, "L2 decay on encoder and classifier")
      ->capture_default_str();
  app.add_option("--centerline_lr", t.centerline_lr,
                 "centerline learning rate (0: follow the encoder schedule)")
      ->capture_default_str();
  app.add_option("--center_point_lr", t.center_point_lr, "center-loss center update rate")
      ->capture_default_str();
  app.add_option("--hidden", cfg.hidden, "hidden widths, comma separated, or none")
      ->capture_default_str();
  app.add_option("--embedding_dim", t.embedding_dim, "embedding dimension n")
      ->capture_default_str();
  app.add_option("--final_activation", activation, "identity or relu")
      ->check(CLI::IsMember({"identity", "relu"}))
      ->capture_default_str();
  app.add_option("--init", init, "gaussian or he")
      ->check(CLI::IsMember({"gaussian", "he"}))
      ->capture_default_str();
  app.add_option("--init_std", t.init_std, "Gaussian init std")->capture_default_str();
  app.add_option("--centerline_init_std", t.centerline_init_std, "centerline init std")
      ->capture_default_str();
  app.add_option("--max_centerline_norm", t.max_centerline_norm, "divergence bound on norms")
      ->capture_default_str();
  app.add_option("--collapse_cosine", t.collapse_cosine,
                 "divergence bound on centerline cosine (>= 1 disables)")
      ->capture_default_str();
  app.add_option("--eval_every", t.eval_every, "epochs between test MAP logs (0: off)")
      ->capture_default_str();

  std::string loss_help = "loss preset:";
  for (auto name : kLossPresets) loss_help += " " + std::string(name);
  app.add_option("--loss", cfg.loss, loss_help)->capture_default_str();
  auto* lambda_opt =
      app.add_option("--lambda", lambda, "ortho weight lambda")->capture_default_str();
  auto* d_opt = app.add_option("--d", d, "cluster stability constant d")->capture_default_str();
  auto* sw_opt = app.add_option("--softmax_weight", softmax_weight,
                                "softmax weight (1 for softmax-only presets)")
                     ->capture_default_str();
  auto* cw_opt =
      app.add_option("--center_weight", center_weight, "center-loss weight")->capture_default_str();

  app.add_option("--f1_cutoff", cfg.eval.f1_cutoff, "F1 cutoff (0: number of relevant items)")
      ->capture_default_str();
  app.add_option("--ndcg_cutoff", cfg.eval.ndcg_cutoff, "NDCG cutoff (0: full ranking)")
      ->capture_default_str();
  app.add_option("--checkpoint", cfg.checkpoint, "checkpoint path (empty: <out>/checkpoint.json)")
      ->capture_default_str();
  app.add_option("--split", cfg.split, "split to evaluate or export")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();
  app.add_flag("--pooled", cfg.pooled, "export one mean-pooled row per object (default off)")
      ->capture_default_str();
  app.add_option("--lambdas", cfg.lambdas, "sweep: lambda values")->capture_default_str();
  app.add_option("--ds", cfg.ds, "sweep: d values")->capture_default_str();

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset")->fallthrough();
  auto* trn = app.add_subcommand("train", "train and write checkpoint + history")->fallthrough();
  auto* evl = app.add_subcommand("eval", "retrieval metrics and geometry report")->fallthrough();
  auto* exp = app.add_subcommand("export", "write embeddings CSV")->fallthrough();
  auto* swp = app.add_subcommand("sweep", "lambda x d sensitivity sweep")->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  Context ctx{cfg, out, err};
  try {
    s.seed = seed;
    t.seed = seed;
    t.hidden_dims = parse_hidden(cfg.hidden);
    t.final_activation = parse_activation(activation);
    t.init = init == "he" ? InitScheme::he : InitScheme::gaussian;
    t.loss = build_loss(cfg.loss, lambda_opt, lambda, d_opt, d, sw_opt, softmax_weight, cw_opt,
                        center_weight);
    if (cfg.dataset.empty() || gen->parsed()) s.validate();
    t.validate();
    if (!(cfg.train_fraction > 0 && cfg.train_fraction < 1))
      throw ConfigError("train_fraction must be in (0, 1)");
    if (cfg.eval.f1_cutoff < 0 || cfg.eval.ndcg_cutoff < 0)
      throw ConfigError("cutoffs must be >= 0");
    if (swp->parsed()) {
      parse_number_list(cfg.lambdas, "lambdas");
      parse_number_list(cfg.ds, "ds");
    }
    ctx.cfg = cfg;
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    fs::create_directories(cfg.out);
    for (auto* sub : {gen, trn, evl, exp, swp}) {
      if (!sub->parsed()) continue;
      auto copy = open_out(fs::path(cfg.out) / (sub->get_name() + ".cfg"));
      copy << app.config_to_str(true, false);
    }
    if (gen->parsed()) return cmd_generate(ctx);
    if (trn->parsed()) return cmd_train(ctx);
    if (evl->parsed()) return cmd_eval(ctx);
    if (exp->parsed()) return cmd_export(ctx);
    if (swp->parsed()) return cmd_sweep(ctx);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace cip
