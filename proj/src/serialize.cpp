#include "cip/serialize.hpp"

#include <fstream>
#include <ostream>
#include <set>

namespace cip {

using nlohmann::json;

json matrix_to_json(const MatrixXd& m) {
  json data = json::array();
  for (double x : m.reshaped()) data.push_back(x);
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw std::runtime_error("checkpoint: matrix size does not match its data");
  MatrixXd m(rows, cols);
  Eigen::Index at = 0;
  for (const auto& x : data) {
    if (!x.is_number()) throw std::runtime_error("checkpoint: non-numeric matrix entry");
    m.reshaped()(at++) = x.get<double>();
  }
  return m;
}

namespace {

json vector_to_json(const VectorXd& v) { return matrix_to_json(MatrixXd(v)); }
VectorXd vector_from_json(const json& j) {
  MatrixXd m = matrix_from_json(j);
  if (m.cols() != 1) throw std::runtime_error("checkpoint: expected a column vector");
  return m.col(0);
}

json layers_to_json(const MlpParams<double>& params) {
  json layers = json::array();
  for (const auto& p : params)
    layers.push_back({{"weights", matrix_to_json(p.weights)}, {"bias", vector_to_json(p.bias)}});
  return layers;
}

MlpParams<double> layers_from_json(const json& j) {
  MlpParams<double> params;
  for (const auto& layer : j)
    params.push_back({matrix_from_json(layer.at("weights")), vector_from_json(layer.at("bias"))});
  return params;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json checkpoint_to_json(const TrainState& state) {
  const auto& spec = state.model.encoder.spec();
  json activations = json::array();
  for (auto a : spec.activations) activations.push_back(std::string(to_string(a)));

  json history = json::array();
  for (const auto& r : state.history) {
    history.push_back({{"epoch", r.epoch},
                       {"lr", r.lr},
                       {"total", r.total},
                       {"terms", r.terms},
                       {"max_centerline_norm", r.max_centerline_norm},
                       {"max_centerline_cosine", r.max_centerline_cosine},
                       {"test_map", optional_number(r.test_map)}});
  }

  return {{"format", "cip-checkpoint"},
          {"version", kCheckpointVersion},
          {"epoch", state.epoch},
          {"encoder",
           {{"layer_dims", spec.layer_dims},
            {"activations", activations},
            {"layers", layers_to_json(state.model.encoder.params())}}},
          {"centerlines", matrix_to_json(state.model.bank.centers())},
          {"classifier",
           {{"weights", matrix_to_json(state.model.classifier.weights)},
            {"bias", vector_to_json(state.model.classifier.bias)}}},
          {"center_points", matrix_to_json(state.model.center_points)},
          {"optimizer",
           {{"encoder", layers_to_json(state.velocity.encoder)},
            {"centerlines", matrix_to_json(state.velocity.centerlines)},
            {"classifier_weights", matrix_to_json(state.velocity.classifier_weights)},
            {"classifier_bias", vector_to_json(state.velocity.classifier_bias)},
            {"center_points", matrix_to_json(state.velocity.center_points)}}},
          {"history", history}};
}

TrainState checkpoint_from_json(const json& j) {
  if (j.value("format", "") != "cip-checkpoint")
    throw std::runtime_error("not a cip checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + j.value("version", json(0)).dump());

  MlpSpec spec;
  spec.layer_dims = j.at("encoder").at("layer_dims").get<std::vector<int>>();
  for (const auto& a : j.at("encoder").at("activations"))
    spec.activations.push_back(parse_activation(a.get<std::string>()));

  TrainState state;
  state.epoch = j.at("epoch").get<int>();
  state.model.encoder = Mlp<double>(spec, layers_from_json(j.at("encoder").at("layers")));
  state.model.bank = CenterlineBank<double>(matrix_from_json(j.at("centerlines")));
  state.model.classifier.weights = matrix_from_json(j.at("classifier").at("weights"));
  state.model.classifier.bias = vector_from_json(j.at("classifier").at("bias"));
  state.model.center_points = matrix_from_json(j.at("center_points"));

  const auto& opt = j.at("optimizer");
  state.velocity.encoder = layers_from_json(opt.at("encoder"));
  state.velocity.centerlines = matrix_from_json(opt.at("centerlines"));
  state.velocity.classifier_weights = matrix_from_json(opt.at("classifier_weights"));
  state.velocity.classifier_bias = vector_from_json(opt.at("classifier_bias"));
  state.velocity.center_points = matrix_from_json(opt.at("center_points"));
  if (state.velocity.encoder.size() != state.model.encoder.params().size())
    throw std::runtime_error("checkpoint: optimizer state does not match encoder");

  for (const auto& r : j.at("history")) {
    EpochRecord rec;
    rec.epoch = r.at("epoch").get<int>();
    rec.lr = r.at("lr").get<double>();
    rec.total = r.at("total").get<double>();
    rec.terms = r.at("terms").get<std::map<std::string, double>>();
    rec.max_centerline_norm = r.at("max_centerline_norm").get<double>();
    rec.max_centerline_cosine = r.at("max_centerline_cosine").get<double>();
    if (!r.at("test_map").is_null()) rec.test_map = r.at("test_map").get<double>();
    state.history.push_back(std::move(rec));
  }
  return state;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(state).dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return checkpoint_from_json(json::parse(in));
}

json loss_report_to_json(const LossReport<double>& report) {
  return {{"total", report.total},
          {"per_term", report.per_term},
          {"weights", report.weights},
          {"feature_grads", matrix_to_json(report.feature_grads)},
          {"center_grads", matrix_to_json(report.center_grads)}};
}

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history) {
  static const std::vector<std::string> canonical{"cluster", "ortho", "ortho_batch", "softmax",
                                                  "center"};
  std::set<std::string> present;
  for (const auto& r : history)
    for (const auto& [name, v] : r.terms) present.insert(name);
  std::vector<std::string> columns;
  for (const auto& name : canonical)
    if (present.erase(name)) columns.push_back(name);
  columns.insert(columns.end(), present.begin(), present.end());

  out << "epoch,lr,total";
  for (const auto& c : columns) out << ',' << c;
  out << ",max_centerline_norm,max_centerline_cosine,test_map\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_double(r.lr) << ',' << format_double(r.total);
    for (const auto& c : columns) {
      out << ',';
      if (auto it = r.terms.find(c); it != r.terms.end()) out << format_double(it->second);
    }
    out << ',' << format_double(r.max_centerline_norm) << ','
        << format_double(r.max_centerline_cosine) << ',';
    if (r.test_map) out << format_double(*r.test_map);
    out << '\n';
  }
}

}  // namespace cip
