#ifndef CIP_DATA_HPP
#define CIP_DATA_HPP

#include "cip/numeric.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cip {

/// Parameters of the synthetic multi-view generator.
struct SyntheticSpec {
  int num_classes = 6;
  int objects_per_class = 20;
  int views_per_object = 12;
  int input_dim = 16;
  double class_separation = 4.0;
  double view_noise_std = 0.5;
  double object_noise_std = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

enum class Split { train, test };

/// One rendered "view": labels are 1-based on this side of the API.
struct ViewRecord {
  int object_id = 0;
  int label = 0;
  int view_index = 0;
};

/// View records with inputs stored column-wise (D x N) and an optional
/// object-level split assignment.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<ViewRecord> records, MatrixXd inputs);

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  int input_dim() const { return static_cast<int>(inputs_.rows()); }
  int num_classes() const { return num_classes_; }

  const std::vector<ViewRecord>& records() const { return records_; }
  const MatrixXd& inputs() const { return inputs_; }
  auto input(std::size_t i) const { return inputs_.col(static_cast<Eigen::Index>(i)); }

  /// Class index (0-based) for record i.
  int class_index(std::size_t i) const { return records_[i].label - 1; }
  std::vector<int> class_indices() const;

  /// Object ids in first-appearance order.
  std::vector<int> object_ids() const;

  const std::map<int, Split>& split_assignment() const { return split_; }
  void set_split_assignment(std::map<int, Split> split);
  bool has_split() const { return !split_.empty(); }

  /// Records of one split, in original order. Requires a split assignment.
  Dataset subset(Split which) const;

  const std::optional<SyntheticSpec>& spec() const { return spec_; }
  void set_spec(SyntheticSpec spec) { spec_ = spec; }

  friend bool operator==(const Dataset& a, const Dataset& b);

 private:
  std::vector<ViewRecord> records_;
  MatrixXd inputs_;
  int num_classes_ = 0;
  std::map<int, Split> split_;
  std::optional<SyntheticSpec> spec_;
};

class DatasetParseError : public std::runtime_error {
 public:
  DatasetParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Class prototypes (D x K): scaled orthonormal directions, extended with
/// random unit directions once K exceeds D.
MatrixXd class_prototypes(int num_classes, int input_dim, double separation,
                          std::mt19937_64& rng);

Dataset generate(const SyntheticSpec& spec);

/// Stratified object-level split. Every class needs at least two objects.
Dataset split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

/// Writes `<stem>.csv` and the JSON sidecar `<stem>.json`.
void save(const Dataset& dataset, const std::filesystem::path& csv_path);
Dataset load(const std::filesystem::path& csv_path);

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

}  // namespace cip

#endif  // CIP_DATA_HPP
