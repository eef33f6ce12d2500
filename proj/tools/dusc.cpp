#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dusc/bench.hpp"
#include "dusc/crypto.hpp"
#include "dusc/ledger.hpp"
#include "dusc/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssertionFailure = 1;
constexpr int kExitUsage = 2;

bool write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    std::cerr << "cannot write " << path << "\n";
    return false;
  }
  out << content;
  return true;
}

void emit(const std::string& csv, const std::string& path) {
  if (path.empty()) {
    std::cout << csv;
  } else if (write_file(path, csv)) {
    std::cout << "wrote " << path << "\n";
  }
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(std::stoull(item));
  }
  return out;
}

int cmd_keygen(const std::optional<std::uint64_t>& seed) {
  dusc::crypto::KeyPair kp;
  if (seed) {
    kp = dusc::crypto::generate_identity(dusc::crypto::seed_from_u64(*seed));
  } else {
    kp = dusc::crypto::generate_identity();
  }
  std::cout << "public:  " << kp.pub.hex() << "\n";
  std::cout << "private: " << dusc::to_hex(dusc::ByteView(kp.priv.bytes.data(),
                                                          kp.priv.bytes.size()))
            << "\n";
  return kExitOk;
}

int cmd_scenario_run(const std::string& file, const std::optional<std::uint64_t>& seed,
                     const std::string& json_path, const std::string& trace_path,
                     const std::string& ledger_dir) {
  dusc::harness::Scenario scenario;
  try {
    scenario = dusc::harness::load_scenario(file);
  } catch (const dusc::harness::ScenarioParseError& e) {
    std::cerr << file << ": " << e.what() << "\n";
    return kExitUsage;
  }

  dusc::harness::Simulation sim(scenario, seed);
  try {
    sim.execute();
  } catch (const std::exception& e) {
    std::cerr << "scenario failed: " << e.what() << "\n";
    return kExitUsage;
  }
  dusc::harness::Report report = sim.report();

  for (const auto& a : report.assertions) {
    std::cout << (a.passed ? "[PASS] " : "[FAIL] ") << a.text;
    if (!a.passed) std::cout << "  (actual: " << a.actual << ")";
    std::cout << "\n";
  }
  std::cout << (report.passed ? "scenario passed" : "scenario FAILED") << " ("
            << report.assertions.size() << " assertions)\n";

  if (!json_path.empty() && !write_file(json_path, report.to_json().dump(2) + "\n")) {
    return kExitUsage;
  }
  if (!trace_path.empty() && !write_file(trace_path, report.trace_bytes() + "\n")) {
    return kExitUsage;
  }
  if (!ledger_dir.empty() && !sim.save_chains(ledger_dir)) {
    std::cerr << "cannot persist chains to " << ledger_dir << "\n";
    return kExitUsage;
  }
  return report.passed ? kExitOk : kExitAssertionFailure;
}

int cmd_ledger_inspect(const std::string& dir, const std::string& file, std::size_t node,
                       std::size_t from, bool as_json) {
  std::filesystem::path path = file.empty()
                                   ? std::filesystem::path(dir) /
                                         ("node_" + std::to_string(node) + ".chain")
                                   : std::filesystem::path(file);
  auto chain = dusc::ledger::load_chain(path);
  if (!chain) {
    std::cerr << "cannot load chain from " << path << "\n";
    return kExitUsage;
  }
  auto blocks = dusc::ledger::retrieve(*chain, from);
  if (as_json) {
    dusc::harness::Json j = dusc::harness::Json::array();
    for (const auto& b : blocks) {
      dusc::harness::Json jb;
      jb["index"] = b.index;
      jb["hash"] = b.block_hash.hex();
      jb["prev_hash"] = b.prev_hash.hex();
      jb["nonce"] = b.nonce;
      dusc::harness::Json txs = dusc::harness::Json::array();
      for (const auto& tx : b.transactions) {
        txs.push_back({{"tx_id", tx.tx_id.hex()},
                       {"sender", dusc::short_hex(tx.sender.view())},
                       {"recipient",
                        tx.recipient == dusc::ledger::broadcast_marker()
                            ? "broadcast"
                            : dusc::short_hex(tx.recipient.view())},
                       {"time", tx.logical_time},
                       {"payload_bytes", tx.payload.size()}});
      }
      jb["transactions"] = std::move(txs);
      j.push_back(std::move(jb));
    }
    std::cout << j.dump(2) << "\n";
  } else {
    for (const auto& b : blocks) {
      std::cout << "block " << b.index << "  hash=" << dusc::short_hex(b.block_hash.view())
                << "  prev=" << dusc::short_hex(b.prev_hash.view()) << "  txs="
                << b.transactions.size() << "\n";
      for (const auto& tx : b.transactions) {
        std::cout << "  tx " << dusc::short_hex(tx.tx_id.view()) << "  "
                  << dusc::short_hex(tx.sender.view()) << " -> "
                  << (tx.recipient == dusc::ledger::broadcast_marker()
                          ? "broadcast"
                          : dusc::short_hex(tx.recipient.view()))
                  << "  t=" << tx.logical_time << "  " << tx.payload.size() << "B\n";
      }
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dusc: capability-based data management over a simulated blockchain"};
  app.require_subcommand(1);

  // keygen
  auto* keygen = app.add_subcommand("keygen", "generate an identity key pair");
  std::optional<std::uint64_t> keygen_seed;
  keygen->add_option("--seed", keygen_seed, "deterministic seed");

  // scenario run
  auto* scenario = app.add_subcommand("scenario", "scenario runner");
  scenario->require_subcommand(1);
  auto* scenario_run = scenario->add_subcommand("run", "run a scenario file");
  std::string scenario_file, scenario_json, scenario_trace, scenario_ledger_dir;
  std::optional<std::uint64_t> scenario_seed;
  scenario_run->add_option("file", scenario_file, "scenario file")->required();
  scenario_run->add_option("--seed", scenario_seed, "override the scenario seed");
  scenario_run->add_option("--json", scenario_json, "write the full report as JSON");
  scenario_run->add_option("--trace", scenario_trace, "write the transaction trace as JSON");
  scenario_run->add_option("--ledger-dir", scenario_ledger_dir,
                           "persist per-node chain files to this directory");

  // bench
  auto* bench = app.add_subcommand("bench", "benchmarks");
  bench->require_subcommand(1);

  auto* bench_auth = bench->add_subcommand("auth", "authorization scaling");
  std::string auth_counts = "100,1000,10000";
  std::string auth_workers = "1";
  std::size_t auth_owners = 10;
  int auth_reps = dusc::harness::kDefaultBenchReps;
  std::string auth_csv;
  bench_auth->add_option("--counts", auth_counts, "capability counts, comma separated");
  bench_auth->add_option("--workers", auth_workers, "worker counts, comma separated");
  bench_auth->add_option("--owners", auth_owners, "registered owners in the fixture");
  bench_auth->add_option("--reps", auth_reps, "repetitions per measurement");
  bench_auth->add_option("--csv", auth_csv, "write rows as CSV");

  auto* bench_bloom = bench->add_subcommand("bloom", "bloom filter performance");
  std::string bloom_keys = "100,1000,10000,100000";
  std::size_t bloom_txns = 100000;
  double bloom_fp = 0.001;
  std::string bloom_csv;
  bench_bloom->add_option("--keys", bloom_keys, "key counts, comma separated");
  bench_bloom->add_option("--txns", bloom_txns, "probe transactions (>= 10000)");
  bench_bloom->add_option("--fp-rate", bloom_fp, "target false-positive rate");
  bench_bloom->add_option("--csv", bloom_csv, "write rows as CSV");

  auto* bench_messages = bench->add_subcommand("messages", "message create/verify costs");
  int msg_reps = dusc::harness::kDefaultBenchReps;
  std::string msg_csv;
  bench_messages->add_option("--reps", msg_reps, "repetitions per measurement");
  bench_messages->add_option("--csv", msg_csv, "write rows as CSV");

  // ledger inspect
  auto* ledger = app.add_subcommand("ledger", "ledger tools");
  ledger->require_subcommand(1);
  auto* inspect = ledger->add_subcommand("inspect", "dump blocks from a persisted chain");
  std::string inspect_dir = "ledger";
  std::string inspect_file;
  std::size_t inspect_node = 0;
  std::size_t inspect_from = 0;
  bool inspect_json = false;
  inspect->add_option("--node", inspect_node, "node index (file node_<N>.chain)");
  inspect->add_option("--dir", inspect_dir, "directory with chain files");
  inspect->add_option("--file", inspect_file, "explicit chain file path");
  inspect->add_option("--from", inspect_from, "first block index to dump");
  inspect->add_flag("--json", inspect_json, "emit JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (keygen->parsed()) return cmd_keygen(keygen_seed);
    if (scenario_run->parsed()) {
      return cmd_scenario_run(scenario_file, scenario_seed, scenario_json, scenario_trace,
                              scenario_ledger_dir);
    }
    if (bench_auth->parsed()) {
      std::vector<unsigned> workers;
      for (std::size_t w : parse_size_list(auth_workers)) {
        workers.push_back(static_cast<unsigned>(w));
      }
      auto result = dusc::harness::bench_auth(parse_size_list(auth_counts), workers,
                                              auth_owners, auth_reps);
      emit(dusc::harness::to_csv(result), auth_csv);
      std::cout << "fit: seconds = " << result.slope << " * N + " << result.intercept
                << "  (r2 = " << result.r2 << ")\n";
      return kExitOk;
    }
    if (bench_bloom->parsed()) {
      if (bloom_txns < 10000) {
        std::cerr << "--txns must be >= 10000 for stable estimates\n";
        return kExitUsage;
      }
      auto rows = dusc::harness::bench_bloom(parse_size_list(bloom_keys), bloom_txns, bloom_fp);
      emit(dusc::harness::to_csv(rows), bloom_csv);
      return kExitOk;
    }
    if (bench_messages->parsed()) {
      auto rows = dusc::harness::bench_messages(msg_reps);
      emit(dusc::harness::to_csv(rows), msg_csv);
      return kExitOk;
    }
    if (inspect->parsed()) {
      return cmd_ledger_inspect(inspect_dir, inspect_file, inspect_node, inspect_from,
                                inspect_json);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
