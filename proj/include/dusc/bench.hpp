#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dusc/crypto.hpp"
#include "dusc/protocol.hpp"

// Benchmark fixtures and measurement helpers behind the CLI bench
// commands. Medians over repeated runs with warmup; absolute numbers are
// hardware-bound, the interesting outputs are the scaling shapes.
namespace dusc::harness {

inline constexpr int kDefaultBenchReps = 21;

// Least-squares fit y = slope*x + intercept; returns R^2.
double linear_fit(const std::vector<double>& xs, const std::vector<double>& ys,
                  double& slope, double& intercept);

double median(std::vector<double> values);

// A source with `owners` registered owners/objects and one M4 carrying
// `capabilities` valid DATs, all granted to one requester.
struct AuthFixture {
  crypto::KeyPair source;
  crypto::KeyPair requester;
  protocol::M4 m4;
  std::size_t owners = 0;
};

AuthFixture build_auth_fixture(std::size_t capabilities, std::size_t owners);

struct AuthBenchRow {
  std::size_t capabilities = 0;
  unsigned workers = 1;
  std::size_t owners = 0;
  double seconds = 0.0;
  double seconds_per_capability = 0.0;
};

struct AuthBenchResult {
  std::vector<AuthBenchRow> rows;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;  // fit of seconds vs capabilities over single-worker rows
};

AuthBenchResult bench_auth(const std::vector<std::size_t>& capability_counts,
                           const std::vector<unsigned>& worker_counts,
                           std::size_t owners = 10, int reps = kDefaultBenchReps);

struct BloomBenchRow {
  std::size_t keys = 0;
  std::size_t txns = 0;
  double measured_fp = 0.0;
  double ns_per_txn = 0.0;
  std::size_t false_negatives = 0;
};

std::vector<BloomBenchRow> bench_bloom(const std::vector<std::size_t>& key_counts,
                                       std::size_t txns, double fp_rate);

struct MessageBenchRow {
  std::string step;      // "M3 (Create)" ...
  std::string role;      // Source / Owner / Requester
  std::string quantity;  // "N/A", "1 Capability", "10 Endorsers", ...
  unsigned cores = 1;
  double seconds = 0.0;
  double scale_ratio = 0.0;  // time(this)/time(previous decade), 0 when n/a
};

std::vector<MessageBenchRow> bench_messages(int reps = kDefaultBenchReps);

std::string to_csv(const AuthBenchResult& result);
std::string to_csv(const std::vector<BloomBenchRow>& rows);
std::string to_csv(const std::vector<MessageBenchRow>& rows);

}  // namespace dusc::harness
