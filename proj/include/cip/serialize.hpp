#ifndef CIP_SERIALIZE_HPP
#define CIP_SERIALIZE_HPP

#include "cip/losses.hpp"
#include "cip/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <span>

namespace cip {

/// Checkpoint schema "cip-checkpoint" version 1. Matrices are stored as
/// {"rows", "cols", "data"} with data in column-major order; doubles are
/// written in shortest round-trip form, so save/load is exact.
inline constexpr int kCheckpointVersion = 1;

nlohmann::json matrix_to_json(const MatrixXd& m);
MatrixXd matrix_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const TrainState& state);
TrainState checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

nlohmann::json loss_report_to_json(const LossReport<double>& report);

/// Columns: epoch, lr, total, one per loss term, centerline stats, test_map.
void write_history_csv(std::ostream& out, std::span<const EpochRecord> history);

}  // namespace cip

#endif  // CIP_SERIALIZE_HPP
