// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria with stated runtime budgets enforce them.
#include <chrono>
#include <cstdio>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dusc/bench.hpp"
#include "dusc/ledger.hpp"
#include "dusc/protocol.hpp"
#include "dusc/pubsub.hpp"
#include "dusc/scenario.hpp"

using namespace dusc;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool cond, const std::string& what) {
    if (!cond) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string scenario_path(const std::string& name) {
  return std::string(DUSC_SCENARIO_DIR) + "/" + name;
}

std::string fmt(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

// Honest M1..M4 exchange fixture shared by criteria 2 and 3.
struct Exchange {
  crypto::KeyPair source;
  protocol::OwnerKeys owner;
  crypto::KeyPair requester;
  crypto::KeyPair endorser;
  protocol::Dot dot;
  protocol::Rt rt;
  protocol::VerifiedRequest vreq;
  protocol::M1 m1;
  protocol::M2 m2;
  protocol::M3 m3;
  protocol::M4 m4;
  protocol::M5 m5;
};

Exchange build_exchange(std::uint64_t seed) {
  crypto::set_deterministic_seed(seed);
  Exchange x;
  x.source = crypto::generate_identity();
  x.owner = {crypto::generate_identity(), crypto::generate_identity(),
             crypto::generate_identity()};
  x.requester = crypto::generate_identity();
  x.endorser = crypto::generate_identity();

  x.dot = protocol::make_dot(x.source, x.owner.main.pub, "hr-2024",
                             {{"type", "heart-rate"}, {"year", "2024"}},
                             {protocol::DapKind::url, "mem://hr-2024"});
  crypto::SignedEnvelope token =
      protocol::make_registration_token(x.owner.main, x.source.pub);
  x.m1 = protocol::make_m1(x.source, x.owner.main.pub, token, x.dot);

  x.rt = protocol::make_rt(x.requester, "type=heart-rate", "country=US", 100, {});
  auto chain = protocol::endorse(x.rt, {}, x.endorser, "approved");
  x.m2 = *protocol::make_m2(x.rt, *chain, x.requester);
  x.vreq = *protocol::verify_m2(x.m2, {x.endorser.pub});

  x.m3 = *protocol::make_m3(x.owner, {{x.dot, x.rt.query}}, x.vreq, 10);
  auto tuples = protocol::verify_m3(x.m3, x.requester);
  std::vector<Bytes> dats;
  for (const auto& t : *tuples) dats.push_back(t.dat);
  x.m4 = *protocol::make_m4(dats, x.requester, x.source.pub);

  auto decision = protocol::authorize(x.m4, x.source, {}, 20, 1);
  x.m5 = protocol::make_m5(x.source, decision.granted.front(), 20);
  return x;
}

protocol::DatInterior open_dat(const Exchange& x, const Bytes& dat) {
  auto sealed = crypto::SealedEnvelope::decode(as_view(dat));
  auto plain = crypto::open(*sealed, x.source);
  return *protocol::DatInterior::decode(as_view(*plain));
}

// --- criterion 1: honest end-to-end flow ---------------------------------

Outcome criterion_1() {
  Outcome out;
  const auto t0 = Clock::now();
  harness::Report rep = harness::run_scenario_file(scenario_path("honest-flow.scn"));
  out.check(rep.passed, "scenario assertions failed");
  auto expect = [&](const char* name, std::uint64_t want) {
    for (const auto& a : rep.assertions) {
      if (a.text.rfind(name, 0) == 0) {
        out.check(a.actual == std::to_string(want),
                  std::string(name) + " = " + a.actual + " want " + std::to_string(want));
        return;
      }
    }
    out.check(false, std::string("missing assertion ") + name);
  };
  expect("portfolio alice", 1);
  expect("grants bob req1", 1);
  expect("retrieved bob", 1);
  expect("audits alice", 1);
  expect("chain-count m3", 1);
  expect("chain-count m5", 1);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  out.check(secs < 10.0, "runtime " + fmt(secs) + "s exceeds 10s");
  out.note(fmt(secs) + "s");
  return out;
}

// --- criterion 2: delegation soundness suite ------------------------------

Outcome criterion_2() {
  Outcome out;
  Exchange x = build_exchange(2001);
  std::set<std::string> codes;

  auto expect_reject = [&](const char* label, const protocol::M4& m4,
                           const std::unordered_set<std::string>& blacklist,
                           std::uint64_t now, protocol::Reason want) {
    auto d = protocol::authorize(m4, x.source, blacklist, now, 1);
    const bool rejected = d.whole_ok() && d.granted.empty() && d.rejected.size() == 1 &&
                          d.rejected[0].second == want;
    out.check(rejected, std::string(label) + " expected " +
                            std::string(protocol::reason_name(want)));
    if (rejected) codes.insert(std::string(protocol::reason_name(want)));
  };

  // (a) presented by a non-grantee
  crypto::KeyPair mallory = crypto::generate_identity();
  expect_reject("(a)", *protocol::make_m4(x.m4.dats, mallory, x.source.pub), {}, 20,
                protocol::Reason::grantee_mismatch);

  // (b) DOT signed by a non-source key
  {
    crypto::KeyPair fake = crypto::generate_identity();
    protocol::DatInterior in = open_dat(x, x.m4.dats[0]);
    in.dot = protocol::make_dot(fake, x.owner.main.pub, in.dot.data_id, in.dot.metadata,
                                in.dot.dap);
    in.dot.source = x.source.pub;
    Bytes dat = crypto::seal(as_view(in.encode()), x.source.pub).encode();
    expect_reject("(b)", *protocol::make_m4({dat}, x.requester, x.source.pub), {}, 20,
                  protocol::Reason::dot_sig);
  }

  // (c) grant signed by a non-owner key
  {
    crypto::KeyPair impostor = crypto::generate_identity();
    protocol::DatInterior in = open_dat(x, x.m4.dats[0]);
    in.grant.owner_signature =
        crypto::sign(as_view(in.grant.signed_body()), impostor).signature;
    Bytes dat = crypto::seal(as_view(in.encode()), x.source.pub).encode();
    expect_reject("(c)", *protocol::make_m4({dat}, x.requester, x.source.pub), {}, 20,
                  protocol::Reason::grant_sig);
  }

  // (d) query tampered inside the sealed grant: flip the ciphertext byte
  // sitting over the query text (the stream cipher keeps positions aligned).
  {
    protocol::DatInterior in = open_dat(x, x.m4.dats[0]);
    Bytes plain = in.encode();
    const std::string needle = "type=heart-rate";
    std::size_t offset = std::string(plain.begin(), plain.end()).rfind(needle);
    out.check(offset != std::string::npos, "(d) query offset not found");
    Bytes dat = x.m4.dats[0];
    auto sealed = crypto::SealedEnvelope::decode(as_view(dat));
    // wire = [len | epk(32) mac(16) stream...] [len | hint]
    const std::size_t wire_offset = 4 + 32 + 16 + offset;
    out.check(wire_offset < 4 + sealed->ciphertext.size(), "(d) offset out of range");
    dat[wire_offset] ^= 0x01;
    expect_reject("(d)", *protocol::make_m4({dat}, x.requester, x.source.pub), {}, 20,
                  protocol::Reason::seal);
  }

  // (e) blacklisted request id
  expect_reject("(e)", x.m4, {x.rt.request_id}, 20, protocol::Reason::blacklisted);

  // (f) expired duration (issued at 10, duration 100)
  expect_reject("(f)", x.m4, {}, 111, protocol::Reason::expired);

  out.check(codes.size() == 6, "expected 6 distinct reason codes, saw " +
                                   std::to_string(codes.size()));
  out.note("codes: grantee-mismatch dot-sig grant-sig seal blacklisted expired");
  return out;
}

// --- criterion 3: single-byte tamper sweep --------------------------------

Outcome criterion_3() {
  Outcome out;
  Exchange x = build_exchange(3001);
  std::size_t flips = 0;
  std::size_t accepted = 0;

  auto sweep = [&](const Bytes& wire, auto&& verify_fails) {
    for (std::size_t i = 0; i < wire.size(); ++i) {
      Bytes bad = wire;
      bad[i] ^= 0x01;
      ++flips;
      if (!verify_fails(bad)) ++accepted;
    }
  };

  sweep(x.m1.encode(), [&](const Bytes& b) {
    auto m = protocol::M1::decode(as_view(b));
    return !m || !protocol::verify_m1(*m, x.owner.main).ok();
  });
  sweep(x.m2.encode(), [&](const Bytes& b) {
    auto m = protocol::M2::decode(as_view(b));
    return !m || !protocol::verify_m2(*m, {x.endorser.pub}).ok();
  });
  sweep(x.m3.encode(), [&](const Bytes& b) {
    auto m = protocol::M3::decode(as_view(b));
    return !m || !protocol::verify_m3(*m, x.requester).ok();
  });
  sweep(x.m4.encode(), [&](const Bytes& b) {
    auto m = protocol::M4::decode(as_view(b));
    if (!m) return true;
    auto d = protocol::authorize(*m, x.source, {}, 20, 1);
    return !d.whole_ok() || d.granted.empty();
  });
  sweep(x.m5.encode(), [&](const Bytes& b) {
    auto m = protocol::M5::decode(as_view(b));
    return !m || !protocol::verify_m5(*m, x.owner.callback).ok();
  });

  out.check(flips >= 200, "only " + std::to_string(flips) + " flips");
  out.check(accepted == 0, std::to_string(accepted) + " silent acceptances");
  out.note(std::to_string(flips) + " flips, 0 accepted");
  return out;
}

// --- criterion 4: authorization linearity and owner invariance -------------

Outcome criterion_4() {
  Outcome out;
  const auto t0 = Clock::now();
  crypto::set_deterministic_seed(4001);

  auto result = harness::bench_auth({100, 1000, 10000}, {1}, /*owners=*/10,
                                    harness::kDefaultBenchReps);
  out.check(result.r2 >= 0.98, "r2 = " + fmt(result.r2, 5));
  out.note("r2 = " + fmt(result.r2, 5));

  auto few = harness::bench_auth({1000}, {1}, /*owners=*/10, harness::kDefaultBenchReps);
  auto many = harness::bench_auth({1000}, {1}, /*owners=*/1000, harness::kDefaultBenchReps);
  const double ratio = few.rows[0].seconds / many.rows[0].seconds;
  out.check(ratio >= 0.5 && ratio <= 2.0, "owner-scale ratio " + fmt(ratio));
  out.note("10-vs-1000-owner ratio = " + fmt(ratio));

  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  out.check(secs < 120.0, "runtime " + fmt(secs) + "s exceeds 120s");
  out.note(fmt(secs) + "s");
  return out;
}

// --- criterion 5: parallel verify speedup ----------------------------------

Outcome criterion_5() {
  Outcome out;
  crypto::set_deterministic_seed(5001);
  harness::AuthFixture fx = harness::build_auth_fixture(1000, 10);

  auto run_and_time = [&](unsigned workers, protocol::AccessDecision& decision) {
    std::vector<double> samples;
    for (int i = 0; i < 9; ++i) {
      const auto t0 = Clock::now();
      decision = protocol::authorize(fx.m4, fx.source, {}, 1, workers);
      samples.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    }
    return harness::median(std::move(samples));
  };

  protocol::AccessDecision d1, d4;
  const double t1 = run_and_time(1, d1);
  const double t4 = run_and_time(4, d4);

  const bool same = d1.whole_ok() == d4.whole_ok() &&
                    d1.granted.size() == d4.granted.size() && d1.rejected == d4.rejected;
  out.check(same, "parallel decision differs from sequential");
  out.check(d1.granted.size() == 1000, "expected 1000 grants");

  const double speedup = t1 / t4;
  out.note("speedup x" + fmt(speedup) + " (1w " + fmt(t1) + "s, 4w " + fmt(t4) + "s, " +
           std::to_string(std::thread::hardware_concurrency()) + " hw threads)");
  out.check(speedup >= 2.0, "speedup x" + fmt(speedup) + " below 2.0");
  return out;
}

// --- criterion 6: ledger integrity -----------------------------------------

Outcome criterion_6() {
  Outcome out;
  const auto t0 = Clock::now();
  crypto::set_deterministic_seed(6001);

  // Tamper-and-scan over a 20-block chain.
  crypto::KeyPair key = crypto::generate_identity();
  ledger::Chain chain{ledger::genesis()};
  for (int b = 0; b < 20; ++b) {
    chain.push_back(ledger::mine(
        {ledger::make_transaction(key, key.pub, to_bytes("blk" + std::to_string(b)),
                                  static_cast<std::uint64_t>(b))},
        chain.back(), 0));
  }
  out.check(ledger::validate_chain(chain, 0).ok, "honest chain rejected");
  for (std::size_t b = 1; b < chain.size(); ++b) {
    ledger::Chain bad = chain;
    bad[b].transactions[0].payload[0] ^= 0x01;
    ledger::CheckResult r = ledger::validate_chain(bad, 0);
    if (r.ok || r.block_index != b) {
      out.check(false, "tamper at block " + std::to_string(b) + " not located");
      break;
    }
  }

  // Five-node convergence with seeded delays and no drops.
  ledger::NetworkConfig cfg;
  cfg.nodes = 5;
  cfg.difficulty_bits = 4;
  cfg.max_txs_per_block = 4;
  cfg.seed = 6002;
  cfg.delay_min = 0;
  cfg.delay_max = 7;
  ledger::NetworkSim net(cfg);
  std::set<std::string> submitted;
  for (std::uint64_t i = 0; i < 40; ++i) {
    auto tx = ledger::make_transaction(key, key.pub, to_bytes("tx" + std::to_string(i)), i);
    submitted.insert(tx.tx_id.hex());
    net.submit(i % 5, tx);
  }
  out.check(net.settle({0, 1, 2, 3, 4}), "network did not settle");

  auto encode_chain = [](const ledger::Chain& c) {
    Bytes all;
    for (const auto& b : c) {
      Bytes e = b.encode();
      all.insert(all.end(), e.begin(), e.end());
    }
    return all;
  };
  const Bytes reference = encode_chain(net.chain(0));
  for (std::size_t n = 1; n < 5; ++n) {
    out.check(encode_chain(net.chain(n)) == reference,
              "node " + std::to_string(n) + " chain differs");
  }
  std::map<std::string, int> counts;
  for (const auto& b : net.chain(0)) {
    for (const auto& tx : b.transactions) counts[tx.tx_id.hex()]++;
  }
  bool exactly_once = counts.size() == submitted.size();
  for (const auto& id : submitted) exactly_once &= counts[id] == 1;
  out.check(exactly_once, "transactions not exactly-once on the converged chain");

  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  out.check(secs < 30.0, "runtime " + fmt(secs) + "s exceeds 30s");
  out.note(fmt(secs) + "s");
  return out;
}

// --- criterion 7: pub-sub delivery vs chain-scan oracle ---------------------

Outcome criterion_7() {
  Outcome out;
  const auto t0 = Clock::now();

  for (const std::string name :
       {"honest-flow.scn", "stolen-ticket.scn", "deny-all.scn", "multi-owner.scn"}) {
    harness::Scenario sc = harness::load_scenario(scenario_path(name));
    harness::Simulation sim(sc);
    sim.execute();
    const ledger::Chain& chain = sim.network().chain(0);

    for (const auto& actor : sc.actors) {
      std::set<std::string> seen;
      if (actor.role == "owner") {
        for (const auto& d : sim.owner(actor.name)->seen_transactions()) seen.insert(d.hex());
      } else if (actor.role == "source") {
        for (const auto& d : sim.source(actor.name)->seen_transactions()) seen.insert(d.hex());
      } else if (actor.role == "requester") {
        for (const auto& d : sim.requester(actor.name)->seen_transactions()) seen.insert(d.hex());
      } else {
        continue;
      }
      std::set<std::string> oracle;
      for (const auto& c : pubsub::chain_scan(chain, sim.subscription_of(actor.name))) {
        oracle.insert(c.tx.tx_id.hex());
      }
      out.check(seen == oracle, name + ": " + actor.name + " delivery != oracle");
    }
  }

  // Fault injection: crash the subscriber after every poll-before-ack point
  // of a 10-block feed; everything must still arrive in an acked batch.
  crypto::set_deterministic_seed(7001);
  crypto::KeyPair sub_key = crypto::generate_identity();
  crypto::KeyPair noise = crypto::generate_identity();
  ledger::Chain full{ledger::genesis()};
  std::uint64_t t = 0;
  for (int b = 0; b < 10; ++b) {
    std::vector<ledger::Transaction> txs;
    for (int i = 0; i < 3; ++i) {
      const crypto::PublicKey& to = (i % 2 == 0) ? sub_key.pub : noise.pub;
      txs.push_back(ledger::make_transaction(noise, to, to_bytes("x"), t++));
    }
    full.push_back(ledger::mine(std::move(txs), full.back(), 0));
  }
  pubsub::Subscription s;
  s.subscriber_id = sub_key.pub;
  s.identities = {sub_key.pub};
  std::set<std::string> oracle;
  for (const auto& c : pubsub::chain_scan(full, s)) oracle.insert(c.tx.tx_id.hex());

  for (std::size_t crash_at = 0; crash_at < full.size() - 1; ++crash_at) {
    ledger::Chain fed{full.front()};
    pubsub::Publisher pub([&]() -> const ledger::Chain& { return fed; });
    auto h = pub.join(s);
    std::set<std::string> delivered;
    for (std::size_t round = 1; round < full.size(); ++round) {
      fed.push_back(full[round]);
      pub.publish_tick();
      pubsub::DeliveryBatch batch = pub.poll(h);
      if (round - 1 == crash_at) {
        pub.recover(h);
        continue;
      }
      for (const auto& c : pubsub::exact_match(s, batch)) delivered.insert(c.tx.tx_id.hex());
      pub.ack(h, batch.batch_id);
    }
    pubsub::DeliveryBatch last = pub.poll(h);
    for (const auto& c : pubsub::exact_match(s, last)) delivered.insert(c.tx.tx_id.hex());
    pub.ack(h, last.batch_id);
    out.check(delivered == oracle,
              "crash point " + std::to_string(crash_at) + " lost transactions");
  }

  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  out.check(secs < 60.0, "runtime " + fmt(secs) + "s exceeds 60s");
  out.note(fmt(secs) + "s");
  return out;
}

// --- criterion 8: bloom filter quality --------------------------------------

Outcome criterion_8() {
  Outcome out;
  const auto t0 = Clock::now();
  crypto::set_deterministic_seed(8001);

  auto rows = harness::bench_bloom({100, 10000, 100000}, 100000, 0.001);
  double t_small = 0, t_large = 0;
  for (const auto& r : rows) {
    out.check(r.false_negatives == 0,
              std::to_string(r.keys) + " keys: " + std::to_string(r.false_negatives) +
                  " false negatives");
    out.check(r.measured_fp <= 0.002,
              std::to_string(r.keys) + " keys: fp " + fmt(r.measured_fp, 4));
    if (r.keys == 100) t_small = r.ns_per_txn;
    if (r.keys == 100000) t_large = r.ns_per_txn;
  }
  const double ratio = t_large / t_small;
  out.check(ratio <= 3.0, "ns/txn ratio " + fmt(ratio) + " above 3x");
  out.note("fp@10k = " + fmt(rows[1].measured_fp, 4) + ", time ratio " + fmt(ratio));

  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  out.check(secs < 60.0, "runtime " + fmt(secs) + "s exceeds 60s");
  out.note(fmt(secs) + "s");
  return out;
}

// --- criterion 9: message cost table shape -----------------------------------

Outcome criterion_9() {
  Outcome out;
  crypto::set_deterministic_seed(9001);
  auto rows = harness::bench_messages(harness::kDefaultBenchReps);

  auto seconds_of = [&](const std::string& step, const std::string& qty,
                        unsigned cores) -> double {
    for (const auto& r : rows) {
      if (r.step == step && r.quantity == qty && r.cores == cores) return r.seconds;
    }
    return -1.0;
  };

  // All row classes present.
  for (const char* step : {"Message 1 (Create)", "Message 1 (Verify)", "Message 5 (Create)",
                           "Message 5 (Verify)"}) {
    out.check(seconds_of(step, "N/A", 1) > 0, std::string(step) + " row missing");
  }
  for (const char* step : {"Message 3 (Create)", "Message 3 (Verify)", "Message 4 (Create)",
                           "Message 4 (Verify)"}) {
    for (const char* qty : {"1 Capability", "10 Capabilities", "100 Capabilities"}) {
      out.check(seconds_of(step, qty, 1) > 0,
                std::string(step) + " " + qty + " row missing");
    }
  }
  out.check(seconds_of("Message 2 (Verify)", "1 Endorser", 1) > 0, "M2 1-endorser missing");
  out.check(seconds_of("Message 2 (Verify)", "10 Endorsers", 1) > 0, "M2 10-endorser missing");

  auto ratio_check = [&](const std::string& step, const std::string& hi,
                         const std::string& lo, const char* label) {
    const double num = seconds_of(step, hi, 1);
    const double den = seconds_of(step, lo, 1);
    const double ratio = den > 0 ? num / den : -1.0;
    out.note(std::string(label) + " x" + fmt(ratio));
    out.check(ratio >= 5.0 && ratio <= 20.0,
              std::string(label) + " ratio x" + fmt(ratio) + " outside [5, 20]");
  };
  ratio_check("Message 3 (Create)", "100 Capabilities", "10 Capabilities", "m3-create");
  ratio_check("Message 3 (Verify)", "100 Capabilities", "10 Capabilities", "m3-verify");
  ratio_check("Message 4 (Verify)", "100 Capabilities", "10 Capabilities", "m4-verify");
  ratio_check("Message 2 (Verify)", "10 Endorsers", "1 Endorser", "m2-verify");
  return out;
}

// --- criterion 10: trace determinism ------------------------------------------

Outcome criterion_10() {
  Outcome out;
  for (const std::string name :
       {"honest-flow.scn", "stolen-ticket.scn", "deny-all.scn", "multi-owner.scn"}) {
    harness::Scenario sc = harness::load_scenario(scenario_path(name));
    harness::Report a = harness::run_scenario(sc);
    harness::Report b = harness::run_scenario(sc);
    out.check(a.trace_bytes() == b.trace_bytes(), name + " traces differ");
  }
  out.note("4 scenarios, byte-identical traces");
  return out;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {1, "honest end-to-end flow", criterion_1},
      {2, "delegation soundness suite", criterion_2},
      {3, "single-byte tamper sweep over M1..M5", criterion_3},
      {4, "authorization linearity and owner invariance", criterion_4},
      {5, "parallel verify speedup", criterion_5},
      {6, "ledger integrity and convergence", criterion_6},
      {7, "pub-sub delivery matches the chain-scan oracle", criterion_7},
      {8, "bloom filter quality", criterion_8},
      {9, "message cost table shape", criterion_9},
      {10, "deterministic transaction traces", criterion_10},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = Clock::now();
    Outcome out = c.run();
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("[%s] criterion %2d: %s (%.2fs)%s%s\n", out.pass ? "PASS" : "FAIL", c.id,
                c.name, secs, out.detail.empty() ? "" : " -- ", out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  if (failures > 0) {
    std::printf("%d of 10 criteria failed\n", failures);
    return 1;
  }
  std::printf("all 10 criteria passed\n");
  return 0;
}
