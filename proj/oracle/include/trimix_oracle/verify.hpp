#pragma once

// Checks of the trimix library against the naive oracle. Used by the test
// suites and by the `gradcheck` and `verify-oracle` CLI commands.

#include <cstdint>
#include <string>
#include <vector>

#include "trimix/config.hpp"
#include "trimix_oracle/oracle.hpp"

namespace trimix_oracle {

struct TensorGradError {
  std::string name;  // e.g. "encoder.0.weight"
  std::size_t coords = 0;
  double rel_error = 0.0;
};

struct GradcheckResult {
  std::vector<TensorGradError> tensors;
  double max_rel_error = 0.0;
  double tolerance = 1e-4;
  double seconds = 0.0;
  bool pass = false;
};

struct GradcheckOptions {
  std::size_t batch = 8;
  std::size_t grid = 16;
  std::uint64_t seed = 0;
  double h = 1e-5;
  double tolerance = 1e-4;
  // 0 probes every coordinate; otherwise at most this many per tensor,
  // drawn without replacement.
  std::size_t max_coords = 0;
};

// Tape gradient of the full objective vs central differences, on one
// synthetic batch. Relative error is taken per parameter tensor:
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-5 * largest tensor
// gradient norm) over the probed entries.
GradcheckResult run_gradcheck(const trimix::TriMixConfig& cfg, const GradcheckOptions& opts);

// Seeded random cases for C, M, L_inv, L_rr, L_vrt and L_con, each library
// value against its naive counterpart.
std::vector<OracleReport> run_oracle_equivalence(std::size_t cases_per_quantity, std::uint64_t seed,
                                                 double tolerance = 1e-10);

}  // namespace trimix_oracle
