#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sensa/core.hpp"

namespace sensa {

/// An external simulator driven over stdin/stdout. Per row the child reads a
/// two-line CSV (header = paramOrder, then one row of values) and must print
/// a two-line CSV (header = outputNames, then one row). In batch mode the
/// child gets every row at once and answers with as many rows, in order.
struct SimulatorSpec {
  std::vector<std::string> command;  // executable, then fixed arguments
  std::vector<std::string> paramOrder;
  std::vector<std::string> outputNames;
  double timeoutSec = 60.0;  // per row; per call in batch mode
  std::size_t maxParallel = 1;
  bool perBatch = false;
  double maxFailFraction = 0.5;  // failing this share of rows or more is an error
};

struct RowFailure {
  std::size_t row;
  std::string reason;
};

struct BatchReport {
  OutputMatrix outputs;
  std::vector<RowFailure> failures;  // sorted by row
};

/// Carries the partial outputs of a batch that failed the quality check.
class BatchQualityError : public Error {
 public:
  BatchQualityError(const std::string& what, BatchReport report)
      : Error(ErrorKind::BatchQuality, what), report_(std::move(report)) {}
  const BatchReport& report() const noexcept { return report_; }

 private:
  BatchReport report_;
};

/// Throws Setup when the executable cannot be found, Config when paramOrder
/// is not a permutation of the space's names.
void validate_spec(const SimulatorSpec& spec, const ParameterSpace& space);

/// Runs every design row. Failed rows (nonzero exit, signal, timeout,
/// malformed or non-finite output) are masked; result order is design order
/// whatever the scheduling. The child environment is inherited plus
/// SENSA_ROW_INDEX (the design row, or "batch" in batch mode).
BatchReport run_batch_report(const SimulatorSpec& spec, const ParameterSpace& space,
                             const DesignMatrix& design);
OutputMatrix run_batch(const SimulatorSpec& spec, const ParameterSpace& space,
                       const DesignMatrix& design);

}  // namespace sensa
