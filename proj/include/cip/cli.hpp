#ifndef CIP_CLI_HPP
#define CIP_CLI_HPP

#include "cip/data.hpp"
#include "cip/eval.hpp"
#include "cip/trainer.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace cip {

/// Exit codes of the `cip` binary.
enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitRuntime = 2 };

/// Everything a run needs, flattened into one key = value namespace.
struct RunConfig {
  // output
  std::string out = "run";

  // data
  std::string dataset;  // CSV path; empty: generate from the synthetic keys
  SyntheticSpec synthetic;
  double train_fraction = 0.5;

  // training and loss
  TrainConfig train;
  std::string loss = "cip";
  std::string hidden = "64";

  // evaluation and export
  EvalOptions eval;
  std::string checkpoint;  // empty: <out>/checkpoint.json
  std::string split = "test";
  bool pooled = false;

  // sweep
  std::string lambdas = "0.1,0.5,1,5,10";
  std::string ds = "2";
};

/// Parses "a,b,c" into numbers. Throws std::invalid_argument on junk or an empty list.
std::vector<double> parse_number_list(const std::string& text, const std::string& key);
/// "none" or "" means no hidden layers.
std::vector<int> parse_hidden(const std::string& text);

/// Runs the command line. Returns one of ExitCode.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cip

#endif  // CIP_CLI_HPP
