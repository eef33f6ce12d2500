#include "dusc/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dusc::harness {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

bool is_option_key(const std::string& tok) {
  return tok.size() > 1 && tok.back() == ':';
}

// Splits "verb arg arg key: value words key2: value" into positional args
// and options; option values run until the next `key:` token.
void split_args(const std::vector<std::string>& tokens, std::size_t start,
                std::vector<std::string>& args,
                std::map<std::string, std::string>& options) {
  std::string current_key;
  std::string current_value;
  auto flush = [&] {
    if (!current_key.empty()) options[current_key] = trim(current_value);
    current_key.clear();
    current_value.clear();
  };
  for (std::size_t i = start; i < tokens.size(); ++i) {
    const std::string& tok = tokens[i];
    if (is_option_key(tok)) {
      flush();
      current_key = tok.substr(0, tok.size() - 1);
    } else if (current_key.empty()) {
      args.push_back(tok);
    } else {
      if (!current_value.empty()) current_value += ' ';
      current_value += tok;
    }
  }
  flush();
}

std::map<std::string, std::string> parse_kv_list(const std::string& text,
                                                 std::size_t line) {
  std::map<std::string, std::string> out;
  if (trim(text).empty()) return out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw ScenarioParseError(line, "expected key=value in '" + item + "'");
    }
    out[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
  }
  return out;
}

std::vector<std::string> parse_name_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::uint64_t parse_u64(const std::string& s, std::size_t line, const std::string& what) {
  try {
    std::size_t pos = 0;
    std::uint64_t v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ScenarioParseError(line, "bad " + what + " value '" + s + "'");
  }
}

std::string kind_label(protocol::MessageKind kind) {
  switch (kind) {
    case protocol::MessageKind::m1: return "m1";
    case protocol::MessageKind::m2: return "m2";
    case protocol::MessageKind::m3: return "m3";
    case protocol::MessageKind::m4: return "m4";
    case protocol::MessageKind::m5: return "m5";
    default: return "other";
  }
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
  Scenario sc;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  std::uint64_t last_at = 0;

  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;

    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      if (section != "scenario" && section != "actors" && section != "events" &&
          section != "assertions") {
        throw ScenarioParseError(line_no, "unknown section [" + section + "]");
      }
      continue;
    }

    if (section == "scenario") {
      auto eq = line.find('=');
      if (eq == std::string::npos) throw ScenarioParseError(line_no, "expected key = value");
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (key == "name") sc.name = value;
      else if (key == "seed") sc.seed = parse_u64(value, line_no, "seed");
      else if (key == "difficulty") sc.difficulty = static_cast<unsigned>(parse_u64(value, line_no, "difficulty"));
      else if (key == "nodes") sc.nodes = parse_u64(value, line_no, "nodes");
      else if (key == "max-txs-per-block") sc.max_txs_per_block = parse_u64(value, line_no, "max-txs-per-block");
      else if (key == "delay-min") sc.delay_min = parse_u64(value, line_no, "delay-min");
      else if (key == "delay-max") sc.delay_max = parse_u64(value, line_no, "delay-max");
      else if (key == "drop-rate") sc.drop_rate = std::stod(value);
      else throw ScenarioParseError(line_no, "unknown scenario key '" + key + "'");
      continue;
    }

    if (section == "actors") {
      auto tokens = split_ws(line);
      if (tokens.size() < 2) throw ScenarioParseError(line_no, "expected: <role> <name> ...");
      ActorDecl decl;
      decl.role = tokens[0];
      decl.name = tokens[1];
      decl.line = line_no;
      std::vector<std::string> extra;
      split_args(tokens, 2, extra, decl.options);
      if (!extra.empty()) {
        throw ScenarioParseError(line_no, "unexpected token '" + extra.front() + "'");
      }
      static const std::set<std::string> roles = {"owner",    "source", "requester",
                                                  "endorser", "miner",  "publisher"};
      if (!roles.contains(decl.role)) {
        throw ScenarioParseError(line_no, "unknown role '" + decl.role + "'");
      }
      for (const auto& a : sc.actors) {
        if (a.name == decl.name) {
          throw ScenarioParseError(line_no, "duplicate actor name '" + decl.name + "'");
        }
      }
      sc.actors.push_back(std::move(decl));
      continue;
    }

    if (section == "events") {
      auto tokens = split_ws(line);
      if (tokens.size() < 2 || tokens[0] != "at") {
        throw ScenarioParseError(line_no, "expected: at <time>: <actor> <verb> ...");
      }
      std::string at_tok = tokens[1];
      if (at_tok.empty() || at_tok.back() != ':') {
        throw ScenarioParseError(line_no, "expected 'at <time>:'");
      }
      EventDecl ev;
      ev.at = parse_u64(at_tok.substr(0, at_tok.size() - 1), line_no, "event time");
      ev.line = line_no;
      if (ev.at < last_at) throw ScenarioParseError(line_no, "event times must be non-decreasing");
      last_at = ev.at;
      if (tokens.size() < 3) throw ScenarioParseError(line_no, "missing event body");
      if (tokens[2] == "settle") {
        ev.verb = "settle";
      } else {
        if (tokens.size() < 4) throw ScenarioParseError(line_no, "missing verb");
        ev.actor = tokens[2];
        ev.verb = tokens[3];
        split_args(tokens, 4, ev.args, ev.options);
      }
      sc.events.push_back(std::move(ev));
      continue;
    }

    if (section == "assertions") {
      auto eq = line.rfind('=');
      if (eq == std::string::npos) throw ScenarioParseError(line_no, "expected '<check> = <value>'");
      AssertionDecl decl;
      decl.text = line;
      decl.lhs = split_ws(trim(line.substr(0, eq)));
      decl.expected = trim(line.substr(eq + 1));
      decl.line = line_no;
      if (decl.lhs.empty()) throw ScenarioParseError(line_no, "empty assertion");
      sc.assertions.push_back(std::move(decl));
      continue;
    }

    throw ScenarioParseError(line_no, "content outside any section");
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioParseError(0, "cannot open scenario file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

// --- Simulation --------------------------------------------------------------

Simulation::Simulation(Scenario scenario, std::optional<std::uint64_t> seed_override)
    : scenario_(std::move(scenario)) {
  if (seed_override) scenario_.seed = *seed_override;
  crypto::set_deterministic_seed(scenario_.seed);

  ledger::NetworkConfig cfg;
  cfg.nodes = std::max<std::size_t>(1, scenario_.nodes);
  cfg.difficulty_bits = scenario_.difficulty;
  cfg.max_txs_per_block = scenario_.max_txs_per_block;
  cfg.seed = scenario_.seed ^ 0x9e3779b97f4a7c15ULL;
  cfg.delay_min = scenario_.delay_min;
  cfg.delay_max = scenario_.delay_max;
  cfg.drop_rate = scenario_.drop_rate;
  network_ = std::make_unique<ledger::NetworkSim>(cfg);

  // Publishers and miners first; they carry no keys.
  for (const ActorDecl& decl : scenario_.actors) {
    if (decl.role == "publisher") {
      std::size_t node = 0;
      if (auto it = decl.options.find("node"); it != decl.options.end()) {
        node = parse_u64(it->second, decl.line, "node");
      }
      if (node >= cfg.nodes) throw ScenarioParseError(decl.line, "publisher node out of range");
      publisher_index_[decl.name] = publishers_.size();
      ledger::NetworkSim* net = network_.get();
      publishers_.push_back(std::make_unique<pubsub::Publisher>(
          [net, node]() -> const ledger::Chain& { return net->chain(node); }));
    } else if (decl.role == "miner") {
      std::size_t node = 0;
      if (auto it = decl.options.find("node"); it != decl.options.end()) {
        node = parse_u64(it->second, decl.line, "node");
      }
      if (node >= cfg.nodes) throw ScenarioParseError(decl.line, "miner node out of range");
      miners_.push_back(node);
    }
  }
  if (publishers_.empty()) {
    ledger::NetworkSim* net = network_.get();
    publisher_index_["pub0"] = 0;
    publishers_.push_back(std::make_unique<pubsub::Publisher>(
        [net]() -> const ledger::Chain& { return net->chain(0); }));
  }
  if (miners_.empty()) miners_.push_back(0);

  // Key generation in declaration order keeps seeded runs reproducible.
  struct PendingOwner {
    const ActorDecl* decl;
    protocol::OwnerKeys keys;
  };
  std::vector<PendingOwner> pending_owners;
  for (const ActorDecl& decl : scenario_.actors) {
    if (decl.role == "owner") {
      protocol::OwnerKeys keys{crypto::generate_identity(), crypto::generate_identity(),
                               crypto::generate_identity()};
      pending_owners.push_back({&decl, keys});
    } else if (decl.role == "source") {
      sources_.push_back(
          std::make_unique<roles::SourceAgent>(decl.name, crypto::generate_identity()));
      if (auto it = decl.options.find("workers"); it != decl.options.end()) {
        sources_.back()->set_authorize_workers(
            static_cast<unsigned>(parse_u64(it->second, decl.line, "workers")));
      }
    } else if (decl.role == "requester") {
      requesters_.push_back(
          std::make_unique<roles::RequesterAgent>(decl.name, crypto::generate_identity()));
    } else if (decl.role == "endorser") {
      std::string feedback = "endorsed";
      if (auto it = decl.options.find("feedback"); it != decl.options.end()) {
        feedback = it->second;
      }
      endorsers_.push_back(std::make_unique<roles::EndorserAgent>(
          decl.name, crypto::generate_identity(), feedback));
    }
  }

  // Owner policies may reference endorsers, so owners come second.
  for (PendingOwner& po : pending_owners) {
    const ActorDecl& decl = *po.decl;
    protocol::AttrMap profile;
    if (auto it = decl.options.find("profile"); it != decl.options.end()) {
      profile = parse_kv_list(it->second, decl.line);
    }
    roles::GrantPolicy policy;
    if (auto it = decl.options.find("policy"); it != decl.options.end()) {
      auto words = split_ws(it->second);
      if (words.empty()) throw ScenarioParseError(decl.line, "empty policy");
      if (words[0] == "deny-all") {
        policy.mode = roles::GrantPolicy::Mode::deny_all;
      } else if (words[0] == "grant-matching") {
        policy.mode = roles::GrantPolicy::Mode::grant_matching;
      } else if (words[0] == "require-endorsement") {
        policy.mode = roles::GrantPolicy::Mode::require_endorsement;
        for (std::size_t i = 1; i < words.size(); ++i) {
          roles::EndorserAgent* e = endorser(words[i]);
          if (!e) throw ScenarioParseError(decl.line, "unknown endorser '" + words[i] + "'");
          policy.required_endorsers.insert(e->id());
        }
      } else {
        throw ScenarioParseError(decl.line, "unknown policy '" + words[0] + "'");
      }
    }
    std::set<crypto::PublicKey> trusted;
    if (auto it = decl.options.find("trusted"); it != decl.options.end()) {
      for (const std::string& name : parse_name_list(it->second)) {
        roles::EndorserAgent* e = endorser(name);
        if (!e) throw ScenarioParseError(decl.line, "unknown endorser '" + name + "'");
        trusted.insert(e->id());
      }
    } else {
      for (const auto& e : endorsers_) trusted.insert(e->id());
    }
    owners_.push_back(std::make_unique<roles::OwnerAgent>(decl.name, po.keys, profile,
                                                          policy, trusted));
  }

  // Subscriptions: every keyed agent joins its publisher.
  auto pub_for = [&](const ActorDecl& decl) -> pubsub::Publisher* {
    if (auto it = decl.options.find("publisher"); it != decl.options.end()) {
      auto found = publisher_index_.find(it->second);
      if (found == publisher_index_.end()) {
        throw ScenarioParseError(decl.line, "unknown publisher '" + it->second + "'");
      }
      return publishers_[found->second].get();
    }
    return publishers_.front().get();
  };
  for (const ActorDecl& decl : scenario_.actors) {
    if (decl.role == "owner") {
      roles::OwnerAgent* a = owner(decl.name);
      pubsub::Publisher* pub = pub_for(decl);
      pubsub::Subscription sub = a->subscription();
      a->attach(pub, pub->join(sub));
      a->set_visibility_sink(&visibility_);
      subscriptions_[decl.name] = sub;
    } else if (decl.role == "source") {
      roles::SourceAgent* a = source(decl.name);
      pubsub::Publisher* pub = pub_for(decl);
      pubsub::Subscription sub = a->subscription();
      a->attach(pub, pub->join(sub));
      a->set_visibility_sink(&visibility_);
      subscriptions_[decl.name] = sub;
    } else if (decl.role == "requester") {
      roles::RequesterAgent* a = requester(decl.name);
      pubsub::Publisher* pub = pub_for(decl);
      pubsub::Subscription sub = a->subscription();
      a->attach(pub, pub->join(sub));
      a->set_visibility_sink(&visibility_);
      subscriptions_[decl.name] = sub;
    }
  }
}

Simulation::~Simulation() = default;

roles::OwnerAgent* Simulation::owner(const std::string& name) {
  for (auto& a : owners_) {
    if (a->name() == name) return a.get();
  }
  return nullptr;
}

roles::SourceAgent* Simulation::source(const std::string& name) {
  for (auto& a : sources_) {
    if (a->name() == name) return a.get();
  }
  return nullptr;
}

roles::RequesterAgent* Simulation::requester(const std::string& name) {
  for (auto& a : requesters_) {
    if (a->name() == name) return a.get();
  }
  return nullptr;
}

roles::EndorserAgent* Simulation::endorser(const std::string& name) {
  for (auto& a : endorsers_) {
    if (a->name() == name) return a.get();
  }
  return nullptr;
}

const pubsub::Subscription& Simulation::subscription_of(const std::string& name) const {
  return subscriptions_.at(name);
}

const std::string& Simulation::request_id(const std::string& alias) const {
  return request_aliases_.at(alias);
}

roles::AgentBus Simulation::make_bus() {
  roles::AgentBus bus;
  bus.submit = [this](const crypto::KeyPair& sender, const crypto::PublicKey& recipient,
                      Bytes payload) {
    ledger::Transaction tx =
        ledger::make_transaction(sender, recipient, std::move(payload), ++tx_seq_);
    if (network_->submit(0, tx)) ++submissions_;
  };
  bus.now = [this] { return clock_; };
  bus.deliver = [this](const roles::ServeReply& reply) {
    for (auto& r : requesters_) {
      if (r->id() == reply.requester) r->on_serve_reply(reply);
    }
  };
  return bus;
}

bool Simulation::chains_agree() const {
  for (std::size_t i = 1; i < network_->node_count(); ++i) {
    if (!(network_->chain(i) == network_->chain(0))) return false;
  }
  return true;
}

std::string Simulation::resolve_request(const std::string& alias, std::size_t line) const {
  auto it = request_aliases_.find(alias);
  if (it == request_aliases_.end()) {
    throw std::runtime_error("line " + std::to_string(line) + ": unknown request alias '" +
                             alias + "'");
  }
  return it->second;
}

void Simulation::run_to_quiescence() {
  roles::AgentBus bus = make_bus();
  for (int guard = 0; guard < 100000; ++guard) {
    bool progress = network_->drain();

    bool pending = false;
    for (std::size_t i = 0; i < network_->node_count(); ++i) {
      pending |= network_->node(i).pending_count() > 0;
    }
    if (pending) {
      network_->mine_round(miners_);
      continue;
    }
    if (!chains_agree()) {
      // Equal-length fork and nothing to mine: extend deterministically so
      // the longest-chain rule converges.
      network_->node(miners_.front()).mine_one(/*allow_empty=*/true);
      network_->broadcast_chain(miners_.front());
      continue;
    }
    if (progress) continue;

    std::uint64_t reads_before = 0;
    for (auto& p : publishers_) reads_before += p->blocks_read();
    for (auto& p : publishers_) p->publish_tick();
    std::uint64_t reads_after = 0;
    for (auto& p : publishers_) reads_after += p->blocks_read();

    const std::uint64_t subs_before = submissions_;
    for (auto& a : owners_) a->process_inbox(bus);
    for (auto& a : requesters_) a->process_inbox(bus);
    for (auto& a : sources_) a->process_inbox(bus);

    if (reads_after == reads_before && submissions_ == subs_before) return;
  }
  throw std::runtime_error("scenario did not reach quiescence");
}

void Simulation::apply_event(const EventDecl& ev) {
  clock_ = std::max(clock_, ev.at);
  roles::AgentBus bus = make_bus();
  auto need = [&](std::size_t n) {
    if (ev.args.size() < n) {
      throw std::runtime_error("line " + std::to_string(ev.line) + ": " + ev.verb +
                               " needs " + std::to_string(n) + " argument(s)");
    }
  };
  auto opt = [&](const std::string& key, const std::string& fallback = "") {
    auto it = ev.options.find(key);
    return it == ev.options.end() ? fallback : it->second;
  };

  if (ev.verb == "settle") {
    run_to_quiescence();
    return;
  }

  if (ev.verb == "register") {
    need(1);
    roles::SourceAgent* s = source(ev.actor);
    roles::OwnerAgent* o = owner(ev.args[0]);
    if (!s || !o) throw std::runtime_error("line " + std::to_string(ev.line) + ": unknown actor");
    s->register_owner(o->keys().main.pub, o->register_with(s->id()));
    return;
  }
  if (ev.verb == "store") {
    need(2);
    roles::SourceAgent* s = source(ev.actor);
    roles::OwnerAgent* o = owner(ev.args[1]);
    if (!s || !o) throw std::runtime_error("line " + std::to_string(ev.line) + ": unknown actor");
    protocol::DataAccessPath dap{protocol::DapKind::url, "mem://" + ev.args[0]};
    if (auto it = ev.options.find("dap"); it != ev.options.end()) {
      auto eq = it->second.find('=');
      if (eq == std::string::npos) {
        throw std::runtime_error("line " + std::to_string(ev.line) + ": dap needs kind=value");
      }
      auto kind = protocol::dap_kind_from_name(trim(it->second.substr(0, eq)));
      if (!kind) throw std::runtime_error("line " + std::to_string(ev.line) + ": bad dap kind");
      dap = {*kind, trim(it->second.substr(eq + 1))};
    }
    s->store(ev.args[0], o->keys().main.pub, parse_kv_list(opt("meta"), ev.line),
             to_bytes(opt("data", "payload:" + ev.args[0])), dap, bus);
    return;
  }
  if (ev.verb == "remove") {
    need(1);
    roles::SourceAgent* s = source(ev.actor);
    if (!s) throw std::runtime_error("line " + std::to_string(ev.line) + ": unknown source");
    s->remove(ev.args[0]);
    return;
  }
  if (ev.verb == "blacklist") {
    need(1);
    roles::SourceAgent* s = source(ev.actor);
    if (!s) throw std::runtime_error("line " + std::to_string(ev.line) + ": unknown source");
    s->blacklist(resolve_request(ev.args[0], ev.line));
    return;
  }
  if (ev.verb == "request") {
    need(1);
    roles::RequesterAgent* r = requester(ev.actor);
    if (!r) throw std::runtime_error("line " + std::to_string(ev.line) + ": unknown requester");
    std::vector<roles::EndorserAgent*> chain;
    for (const std::string& name : parse_name_list(opt("endorse"))) {
      roles::EndorserAgent* e = endorser(name);
      if (!e) throw std::runtime_error("line " + std::to_string(ev.line) + ": unknown endorser");
      chain.push_back(e);
    }
    const std::string duration_text = opt("duration", "3600");
    std::string rid = r->broadcast_request(
        bus, opt("query"), opt("conditions"), parse_u64(duration_text, ev.line, "duration"),
        parse_kv_list(opt("meta"), ev.line), chain);
    if (rid.empty()) {
      throw std::runtime_error("line " + std::to_string(ev.line) + ": request failed");
    }
    request_aliases_[ev.args[0]] = rid;
    return;
  }
  if (ev.verb == "access") {
    need(2);
    roles::RequesterAgent* r = requester(ev.actor);
    roles::SourceAgent* s = source(ev.args[1]);
    if (!r || !s) throw std::runtime_error("line " + std::to_string(ev.line) + ": unknown actor");
    r->access(bus, resolve_request(ev.args[0], ev.line), s->id());
    return;
  }
  if (ev.verb == "steal") {
    need(2);
    roles::RequesterAgent* thief = requester(ev.actor);
    roles::RequesterAgent* victim = requester(ev.args[0]);
    if (!thief || !victim) {
      throw std::runtime_error("line " + std::to_string(ev.line) + ": unknown requester");
    }
    thief->adopt_grants(*victim, resolve_request(ev.args[1], ev.line));
    return;
  }
  throw std::runtime_error("line " + std::to_string(ev.line) + ": unknown verb '" +
                           ev.verb + "'");
}

void Simulation::execute() {
  const auto t0 = std::chrono::steady_clock::now();
  for (const EventDecl& ev : scenario_.events) apply_event(ev);
  run_to_quiescence();
  run_seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool Simulation::save_chains(const std::string& directory) const {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  bool ok = true;
  for (std::size_t i = 0; i < network_->node_count(); ++i) {
    ok &= ledger::save_chain(network_->chain(i),
                             std::filesystem::path(directory) /
                                 ("node_" + std::to_string(i) + ".chain"));
  }
  return ok;
}

Report Simulation::report() {
  Report rep;
  rep.scenario = scenario_.name;
  rep.seed = scenario_.seed;

  const ledger::Chain& chain = network_->chain(0);
  for (const ledger::Block& block : chain) {
    std::size_t i = 0;
    for (const ledger::Transaction& tx : block.transactions) {
      Json row = Json::object();
      row["block"] = block.index;
      row["tx"] = i++;
      row["kind"] = kind_label(protocol::classify_payload(as_view(tx.payload)));
      row["sender"] = short_hex(tx.sender.view());
      row["recipient"] = tx.recipient == ledger::broadcast_marker()
                             ? "broadcast"
                             : short_hex(tx.recipient.view());
      row["time"] = tx.logical_time;
      row["payload_digest"] = crypto::digest(as_view(tx.payload)).hex();
      rep.trace.push_back(std::move(row));
    }
  }

  auto alias_of = [&](const std::string& rid) -> std::string {
    for (const auto& [alias, id] : request_aliases_) {
      if (id == rid) return alias;
    }
    return rid;
  };

  for (const auto& o : owners_) {
    Json j = Json::object();
    j["role"] = "owner";
    j["portfolio"] = o->portfolio().size();
    j["audits"] = o->audit_log().size();
    j["m3_sent"] = o->m3_sent();
    Json audits = Json::array();
    for (const auto& rec : o->audit_log()) {
      audits.push_back({{"data_id", rec.data_id},
                        {"grantee", short_hex(rec.grantee.view())},
                        {"time", rec.logical_time}});
    }
    j["audit_log"] = std::move(audits);
    rep.agents[o->name()] = std::move(j);
  }
  for (const auto& s : sources_) {
    Json j = Json::object();
    j["role"] = "source";
    j["served"] = s->served_log().size();
    rep.agents[s->name()] = std::move(j);
  }
  for (const auto& r : requesters_) {
    Json j = Json::object();
    j["role"] = "requester";
    j["retrieved"] = r->retrieved().size();
    Json grants = Json::object();
    for (const auto& [alias, rid] : request_aliases_) {
      if (r->open_requests().contains(rid) || r->grant_count(rid) > 0) {
        grants[alias] = r->grant_count(rid);
      }
    }
    j["grants"] = std::move(grants);
    Json rejections = Json::object();
    for (const auto& [rid, code] : r->rejections()) rejections[alias_of(rid)] = code;
    j["rejections"] = std::move(rejections);
    rep.agents[r->name()] = std::move(j);
  }

  bool all_pass = true;
  for (const AssertionDecl& a : scenario_.assertions) {
    AssertionResult res;
    res.text = a.text;
    res.expected = a.expected;
    std::string actual = "<unknown-check>";
    try {
      const std::string& what = a.lhs.at(0);
      if (what == "portfolio") {
        roles::OwnerAgent* o = owner(a.lhs.at(1));
        if (o) actual = std::to_string(o->portfolio().size());
      } else if (what == "audits") {
        roles::OwnerAgent* o = owner(a.lhs.at(1));
        std::optional<std::string> data_id;
        if (a.lhs.size() > 2) data_id = a.lhs[2];
        if (o) actual = std::to_string(o->audit(data_id).size());
      } else if (what == "grants") {
        roles::RequesterAgent* r = requester(a.lhs.at(1));
        if (r) actual = std::to_string(r->grant_count(resolve_request(a.lhs.at(2), a.line)));
      } else if (what == "retrieved") {
        roles::RequesterAgent* r = requester(a.lhs.at(1));
        if (r) actual = std::to_string(r->retrieved().size());
      } else if (what == "rejection") {
        roles::RequesterAgent* r = requester(a.lhs.at(1));
        if (r) {
          const auto& rej = r->rejections();
          auto it = rej.find(resolve_request(a.lhs.at(2), a.line));
          actual = it == rej.end() ? "<none>" : it->second;
        }
      } else if (what == "served") {
        roles::SourceAgent* s = source(a.lhs.at(1));
        if (s) actual = std::to_string(s->served_log().size());
      } else if (what == "chain-count") {
        std::size_t count = 0;
        for (const ledger::Block& b : chain) {
          for (const ledger::Transaction& tx : b.transactions) {
            if (kind_label(protocol::classify_payload(as_view(tx.payload))) == a.lhs.at(1)) {
              ++count;
            }
          }
        }
        actual = std::to_string(count);
      }
    } catch (const std::exception& e) {
      actual = std::string("<error: ") + e.what() + ">";
    }
    res.actual = actual;
    res.passed = actual == a.expected;
    all_pass &= res.passed;
    rep.assertions.push_back(std::move(res));
  }
  rep.passed = all_pass;
  rep.timings["run_seconds"] = run_seconds_;
  return rep;
}

Json Report::to_json() const {
  Json j = Json::object();
  j["scenario"] = scenario;
  j["seed"] = seed;
  j["passed"] = passed;
  Json checks = Json::array();
  for (const AssertionResult& a : assertions) {
    checks.push_back({{"check", a.text},
                      {"expected", a.expected},
                      {"actual", a.actual},
                      {"passed", a.passed}});
  }
  j["assertions"] = std::move(checks);
  j["agents"] = agents;
  j["trace"] = trace;
  j["timings"] = timings;
  return j;
}

std::string Report::trace_bytes() const {
  Json j = Json::object();
  j["scenario"] = scenario;
  j["seed"] = seed;
  j["trace"] = trace;
  return j.dump(2);
}

Report run_scenario(const Scenario& scenario, std::optional<std::uint64_t> seed_override) {
  Simulation sim(scenario, seed_override);
  sim.execute();
  return sim.report();
}

Report run_scenario_file(const std::string& path,
                         std::optional<std::uint64_t> seed_override) {
  return run_scenario(load_scenario(path), seed_override);
}

}  // namespace dusc::harness
