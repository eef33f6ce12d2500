#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dusc/ledger.hpp"
#include "dusc/pubsub.hpp"
#include "dusc/roles.hpp"

#include <json.hpp>

// Declarative scenario runner: a line-oriented script declares actors,
// events and expected outcomes; the runner drives the full stack to
// quiescence and produces a machine-readable report. Identical
// (scenario, seed) pairs produce byte-identical transaction traces.
namespace dusc::harness {

using Json = nlohmann::ordered_json;

struct ScenarioParseError : std::runtime_error {
  ScenarioParseError(std::size_t line, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ": " + message),
        line_number(line) {}
  std::size_t line_number;
};

struct ActorDecl {
  std::string role;  // owner | source | requester | endorser | miner | publisher
  std::string name;
  std::map<std::string, std::string> options;
  std::size_t line = 0;
};

struct EventDecl {
  std::uint64_t at = 0;
  std::string actor;  // empty for `settle`
  std::string verb;
  std::vector<std::string> args;                  // positional
  std::map<std::string, std::string> options;     // key: value segments
  std::size_t line = 0;
};

struct AssertionDecl {
  std::string text;       // original line, for reporting
  std::vector<std::string> lhs;
  std::string expected;
  std::size_t line = 0;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 0;
  unsigned difficulty = 0;
  std::size_t nodes = 1;
  std::size_t max_txs_per_block = 64;
  std::uint64_t delay_min = 0;
  std::uint64_t delay_max = 0;
  double drop_rate = 0.0;
  std::vector<ActorDecl> actors;
  std::vector<EventDecl> events;
  std::vector<AssertionDecl> assertions;
};

Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);

struct AssertionResult {
  std::string text;
  std::string expected;
  std::string actual;
  bool passed = false;
};

struct Report {
  std::string scenario;
  std::uint64_t seed = 0;
  bool passed = false;
  std::vector<AssertionResult> assertions;
  Json trace = Json::array();   // deterministic under a fixed seed
  Json agents = Json::object();
  Json timings = Json::object();

  Json to_json() const;
  std::string trace_bytes() const;  // serialized trace only
};

// The live simulation; tests drive it directly when they need to poke at
// agents, publishers or the network mid-run.
class Simulation {
 public:
  Simulation(Scenario scenario, std::optional<std::uint64_t> seed_override = {});
  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  void execute();          // all events, each followed by implicit progress
  void run_to_quiescence();
  Report report();

  std::uint64_t clock() const { return clock_; }
  ledger::NetworkSim& network() { return *network_; }
  const std::vector<roles::KeyVisibility>& visibility() const { return visibility_; }

  roles::OwnerAgent* owner(const std::string& name);
  roles::SourceAgent* source(const std::string& name);
  roles::RequesterAgent* requester(const std::string& name);
  roles::EndorserAgent* endorser(const std::string& name);
  pubsub::Publisher* publisher(std::size_t i) { return publishers_[i].get(); }
  std::size_t publisher_count() const { return publishers_.size(); }
  const pubsub::Subscription& subscription_of(const std::string& agent_name) const;
  const std::string& request_id(const std::string& alias) const;

  bool save_chains(const std::string& directory) const;

 private:
  void apply_event(const EventDecl& ev);
  roles::AgentBus make_bus();
  std::string resolve_request(const std::string& alias, std::size_t line) const;
  bool chains_agree() const;

  Scenario scenario_;
  std::unique_ptr<ledger::NetworkSim> network_;
  std::vector<std::unique_ptr<pubsub::Publisher>> publishers_;
  std::map<std::string, std::size_t> publisher_index_;
  std::vector<std::unique_ptr<roles::OwnerAgent>> owners_;
  std::vector<std::unique_ptr<roles::SourceAgent>> sources_;
  std::vector<std::unique_ptr<roles::RequesterAgent>> requesters_;
  std::vector<std::unique_ptr<roles::EndorserAgent>> endorsers_;
  std::map<std::string, pubsub::Subscription> subscriptions_;
  std::vector<std::size_t> miners_;
  std::map<std::string, std::string> request_aliases_;  // alias -> request id
  std::vector<roles::KeyVisibility> visibility_;
  std::uint64_t clock_ = 0;
  std::uint64_t tx_seq_ = 0;
  std::uint64_t submissions_ = 0;
  double run_seconds_ = 0.0;
};

Report run_scenario(const Scenario& scenario,
                    std::optional<std::uint64_t> seed_override = {});
Report run_scenario_file(const std::string& path,
                         std::optional<std::uint64_t> seed_override = {});

}  // namespace dusc::harness
