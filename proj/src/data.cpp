#include "cip/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string_view>

namespace cip {

namespace {

using nlohmann::json;

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* what) {
  T value{};
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw DatasetParseError(line, std::string("malformed ") + what + " '" + std::string(field) + "'");
  }
  return value;
}

json spec_to_json(const SyntheticSpec& s) {
  return json{{"num_classes", s.num_classes},
              {"objects_per_class", s.objects_per_class},
              {"views_per_object", s.views_per_object},
              {"input_dim", s.input_dim},
              {"class_separation", s.class_separation},
              {"view_noise_std", s.view_noise_std},
              {"object_noise_std", s.object_noise_std},
              {"seed", s.seed}};
}

SyntheticSpec spec_from_json(const json& j) {
  SyntheticSpec s;
  s.num_classes = j.at("num_classes").get<int>();
  s.objects_per_class = j.at("objects_per_class").get<int>();
  s.views_per_object = j.at("views_per_object").get<int>();
  s.input_dim = j.at("input_dim").get<int>();
  s.class_separation = j.at("class_separation").get<double>();
  s.view_noise_std = j.at("view_noise_std").get<double>();
  s.object_noise_std = j.at("object_noise_std").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
  if (objects_per_class < 1) throw std::invalid_argument("objects_per_class must be >= 1");
  if (views_per_object < 1) throw std::invalid_argument("views_per_object must be >= 1");
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (!(view_noise_std >= 0) || !(object_noise_std >= 0))
    throw std::invalid_argument("noise stds must be >= 0");
  if (!std::isfinite(class_separation)) throw std::invalid_argument("class_separation must be finite");
}

Dataset::Dataset(std::vector<ViewRecord> records, MatrixXd inputs)
    : records_(std::move(records)), inputs_(std::move(inputs)) {
  if (static_cast<Eigen::Index>(records_.size()) != inputs_.cols())
    throw std::invalid_argument("Dataset: record count does not match input columns");
  for (const auto& r : records_) {
    if (r.label < 1) throw std::invalid_argument("Dataset: labels must be >= 1");
    num_classes_ = std::max(num_classes_, r.label);
  }
  if (!inputs_.allFinite()) throw std::invalid_argument("Dataset: non-finite input");
}

std::vector<int> Dataset::class_indices() const {
  std::vector<int> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.label - 1);
  return out;
}

std::vector<int> Dataset::object_ids() const {
  std::vector<int> ids;
  std::set<int> seen;
  for (const auto& r : records_)
    if (seen.insert(r.object_id).second) ids.push_back(r.object_id);
  return ids;
}

void Dataset::set_split_assignment(std::map<int, Split> split) {
  for (const auto& r : records_) {
    if (!split.contains(r.object_id))
      throw std::invalid_argument("split: object " + std::to_string(r.object_id) + " unassigned");
  }
  split_ = std::move(split);
}

Dataset Dataset::subset(Split which) const {
  if (!has_split()) throw std::logic_error("Dataset::subset: dataset has no split assignment");
  std::vector<ViewRecord> records;
  std::vector<Eigen::Index> cols;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (split_.at(records_[i].object_id) == which) {
      records.push_back(records_[i]);
      cols.push_back(static_cast<Eigen::Index>(i));
    }
  }
  MatrixXd inputs = inputs_(Eigen::all, cols);
  // Labels keep the parent's numbering.
  Dataset out(std::move(records), std::move(inputs));
  out.num_classes_ = num_classes_;
  std::map<int, Split> sub;
  for (const auto& [id, s] : split_)
    if (s == which) sub.emplace(id, s);
  out.split_ = std::move(sub);
  out.spec_ = spec_;
  return out;
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.records_.size() != b.records_.size()) return false;
  for (std::size_t i = 0; i < a.records_.size(); ++i) {
    const auto& x = a.records_[i];
    const auto& y = b.records_[i];
    if (x.object_id != y.object_id || x.label != y.label || x.view_index != y.view_index)
      return false;
  }
  return a.inputs_.rows() == b.inputs_.rows() && a.inputs_ == b.inputs_ && a.split_ == b.split_;
}

MatrixXd class_prototypes(int num_classes, int input_dim, double separation,
                          std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd gaussian(input_dim, input_dim);
  for (Eigen::Index j = 0; j < gaussian.cols(); ++j)
    for (Eigen::Index i = 0; i < gaussian.rows(); ++i) gaussian(i, j) = normal(rng);
  const MatrixXd basis = Eigen::HouseholderQR<MatrixXd>(gaussian).householderQ();

  MatrixXd protos(input_dim, num_classes);
  for (int k = 0; k < num_classes; ++k) {
    if (k < input_dim) {
      protos.col(k) = separation * basis.col(k);
    } else {
      VectorXd dir(input_dim);
      for (auto& v : dir) v = normal(rng);
      protos.col(k) = separation * dir.normalized();
    }
  }
  return protos;
}

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const MatrixXd protos =
      class_prototypes(spec.num_classes, spec.input_dim, spec.class_separation, rng);
  std::normal_distribution<double> standard_normal(0.0, 1.0);

  const auto total = static_cast<Eigen::Index>(spec.num_classes) * spec.objects_per_class *
                     spec.views_per_object;
  std::vector<ViewRecord> records;
  records.reserve(static_cast<std::size_t>(total));
  MatrixXd inputs(spec.input_dim, total);

  Eigen::Index col = 0;
  int object_id = 0;
  VectorXd object(spec.input_dim);
  for (int k = 0; k < spec.num_classes; ++k) {
    for (int o = 0; o < spec.objects_per_class; ++o, ++object_id) {
      for (Eigen::Index t = 0; t < object.size(); ++t)
        object(t) = protos(t, k) + spec.object_noise_std * standard_normal(rng);
      for (int v = 0; v < spec.views_per_object; ++v, ++col) {
        for (Eigen::Index t = 0; t < object.size(); ++t)
          inputs(t, col) = object(t) + spec.view_noise_std * standard_normal(rng);
        records.push_back({object_id, k + 1, v});
      }
    }
  }
  Dataset out(std::move(records), std::move(inputs));
  out.set_spec(spec);
  return out;
}

Dataset split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split: train_fraction must be in (0, 1)");
  std::map<int, std::vector<int>> objects_by_label;
  {
    std::set<int> seen;
    for (const auto& r : dataset.records()) {
      if (seen.insert(r.object_id).second) objects_by_label[r.label].push_back(r.object_id);
    }
  }
  std::mt19937_64 rng(seed);
  std::map<int, Split> assignment;
  for (auto& [label, ids] : objects_by_label) {
    const int count = static_cast<int>(ids.size());
    if (count < 2) {
      throw std::invalid_argument("split: class " + std::to_string(label) +
                                  " has fewer than 2 objects");
    }
    std::shuffle(ids.begin(), ids.end(), rng);
    const int n_train =
        std::clamp(static_cast<int>(std::lround(train_fraction * count)), 1, count - 1);
    for (int i = 0; i < count; ++i) assignment[ids[i]] = i < n_train ? Split::train : Split::test;
  }
  Dataset out = dataset;
  out.set_split_assignment(std::move(assignment));
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

void save(const Dataset& dataset, const std::filesystem::path& csv_path) {
  if (dataset.empty()) throw std::invalid_argument("save: empty dataset");
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot open " + csv_path.string() + " for writing");
  csv << "object_id,label,view_index";
  for (int t = 0; t < dataset.input_dim(); ++t) csv << ",x" << t;
  csv << '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset.records()[i];
    csv << r.object_id << ',' << r.label << ',' << r.view_index;
    for (double x : dataset.input(i)) csv << ',' << format_double(x);
    csv << '\n';
  }
  if (!csv) throw std::runtime_error("write failed: " + csv_path.string());

  json side;
  side["format"] = "cip-dataset";
  side["version"] = 1;
  side["input_dim"] = dataset.input_dim();
  side["num_classes"] = dataset.num_classes();
  side["num_records"] = dataset.size();
  side["spec"] = dataset.spec() ? spec_to_json(*dataset.spec()) : json(nullptr);
  if (dataset.has_split()) {
    json train = json::array();
    json test = json::array();
    for (const auto& [id, s] : dataset.split_assignment()) (s == Split::train ? train : test).push_back(id);
    side["split"] = {{"train", train}, {"test", test}};
  } else {
    side["split"] = nullptr;
  }
  std::ofstream js(sidecar_path(csv_path), std::ios::binary);
  if (!js) throw std::runtime_error("cannot write sidecar for " + csv_path.string());
  js << side.dump(2) << '\n';
}

Dataset load(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + csv_path.string());

  std::string line;
  if (!std::getline(in, line)) throw DatasetParseError(1, "missing header");
  const auto header = split_fields(line);
  if (header.size() < 4 || header[0] != "object_id" || header[1] != "label" ||
      header[2] != "view_index") {
    throw DatasetParseError(1, "header must be object_id,label,view_index,x0..x{D-1}");
  }
  const int dim = static_cast<int>(header.size()) - 3;
  for (int t = 0; t < dim; ++t) {
    if (header[static_cast<std::size_t>(t) + 3] != "x" + std::to_string(t))
      throw DatasetParseError(1, "unexpected column '" + std::string(header[t + 3u]) + "'");
  }

  std::vector<ViewRecord> records;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (static_cast<int>(fields.size()) != dim + 3) {
      throw DatasetParseError(line_no, "expected " + std::to_string(dim + 3) + " fields, got " +
                                           std::to_string(fields.size()));
    }
    ViewRecord r;
    r.object_id = parse_number<int>(fields[0], line_no, "object_id");
    r.label = parse_number<int>(fields[1], line_no, "label");
    r.view_index = parse_number<int>(fields[2], line_no, "view_index");
    if (r.label < 1) throw DatasetParseError(line_no, "label must be >= 1");
    for (int t = 0; t < dim; ++t) {
      const double x = parse_number<double>(fields[t + 3u], line_no, "value");
      if (!std::isfinite(x)) throw DatasetParseError(line_no, "non-finite value");
      values.push_back(x);
    }
    records.push_back(r);
  }
  if (records.empty()) throw DatasetParseError(line_no, "dataset has no records");

  MatrixXd inputs =
      Eigen::Map<MatrixXd>(values.data(), dim, static_cast<Eigen::Index>(records.size()));
  {
    std::set<int> labels;
    for (const auto& r : records) labels.insert(r.label);
    if (*labels.rbegin() != static_cast<int>(labels.size()))
      throw DatasetParseError(line_no, "labels must be contiguous in [1, K]");
  }
  Dataset out(std::move(records), std::move(inputs));

  const auto side_path = sidecar_path(csv_path);
  if (std::filesystem::exists(side_path)) {
    std::ifstream js(side_path);
    json side = json::parse(js);
    if (side.value("format", "") != "cip-dataset" || side.value("version", 0) != 1)
      throw std::runtime_error("unsupported dataset sidecar " + side_path.string());
    if (side.at("input_dim").get<int>() != dim)
      throw std::runtime_error("sidecar input_dim disagrees with CSV columns");
    if (!side["spec"].is_null()) out.set_spec(spec_from_json(side["spec"]));
    if (!side["split"].is_null()) {
      std::map<int, Split> assignment;
      for (int id : side["split"].at("train")) assignment[id] = Split::train;
      for (int id : side["split"].at("test")) assignment[id] = Split::test;
      out.set_split_assignment(std::move(assignment));
    }
  }
  return out;
}

}  // namespace cip
