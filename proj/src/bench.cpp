#include "dusc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "dusc/pubsub.hpp"

namespace dusc::harness {

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
double time_once(F&& f) {
  const auto t0 = Clock::now();
  f();
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename F>
double time_median(F&& f, int reps) {
  f();  // warmup
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(reps));
  for (int i = 0; i < reps; ++i) samples.push_back(time_once(f));
  return median(std::move(samples));
}

crypto::PublicKey random_key() {
  crypto::PublicKey k;
  crypto::random_bytes(k.bytes.data(), k.bytes.size());
  return k;
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

double linear_fit(const std::vector<double>& xs, const std::vector<double>& ys,
                  double& slope, double& intercept) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw std::invalid_argument("linear_fit: need >= 2 points");
  }
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double denom = n * sxx - sx * sx;
  slope = (n * sxy - sx * sy) / denom;
  intercept = (sy - slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean_y = sy / n;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double fit = slope * xs[i] + intercept;
    ss_res += (ys[i] - fit) * (ys[i] - fit);
    ss_tot += (ys[i] - mean_y) * (ys[i] - mean_y);
  }
  return ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
}

AuthFixture build_auth_fixture(std::size_t capabilities, std::size_t owners) {
  if (owners == 0) owners = 1;
  AuthFixture fx;
  fx.source = crypto::generate_identity();
  fx.requester = crypto::generate_identity();
  fx.owners = owners;

  struct OwnerSlot {
    crypto::KeyPair main;
    crypto::KeyPair callback;
  };
  std::vector<OwnerSlot> owner_keys;
  owner_keys.reserve(owners);
  for (std::size_t i = 0; i < owners; ++i) {
    owner_keys.push_back({crypto::generate_identity(), crypto::generate_identity()});
  }

  std::vector<Bytes> dats;
  dats.reserve(capabilities);
  for (std::size_t i = 0; i < capabilities; ++i) {
    const OwnerSlot& ok = owner_keys[i % owners];
    protocol::Dot dot = protocol::make_dot(
        fx.source, ok.main.pub, "obj-" + std::to_string(i),
        {{"type", "series"}, {"slot", std::to_string(i % owners)}},
        {protocol::DapKind::url, "mem://obj-" + std::to_string(i)});
    protocol::Grant grant;
    grant.data_id = dot.data_id;
    grant.request_id = "bench-request";
    grant.query = "type=series";
    grant.owner = ok.main.pub;
    grant.callback = ok.callback.pub;
    grant.grantee = fx.requester.pub;
    grant.duration_secs = 1u << 30;
    grant.issued_at = 0;
    grant.owner_signature =
        crypto::sign(as_view(grant.signed_body()), ok.main).signature;
    dats.push_back(protocol::make_dat(dot, grant, fx.source.pub));
  }
  auto m4 = protocol::make_m4(dats, fx.requester, fx.source.pub);
  if (!m4.ok()) throw std::runtime_error("bench fixture: make_m4 failed");
  fx.m4 = std::move(*m4);
  return fx;
}

AuthBenchResult bench_auth(const std::vector<std::size_t>& capability_counts,
                           const std::vector<unsigned>& worker_counts,
                           std::size_t owners, int reps) {
  AuthBenchResult result;
  const std::unordered_set<std::string> no_blacklist;
  std::vector<double> fit_x, fit_y;
  const unsigned fit_workers = worker_counts.empty() ? 1 : worker_counts.front();

  for (std::size_t n : capability_counts) {
    AuthFixture fx = build_auth_fixture(n, owners);
    for (unsigned w : worker_counts) {
      const double secs = time_median(
          [&] {
            auto decision = protocol::authorize(fx.m4, fx.source, no_blacklist, 1, w);
            if (decision.granted.size() != n) {
              throw std::runtime_error("bench_auth: unexpected decision");
            }
          },
          reps);
      AuthBenchRow row;
      row.capabilities = n;
      row.workers = w;
      row.owners = owners;
      row.seconds = secs;
      row.seconds_per_capability = n ? secs / static_cast<double>(n) : 0.0;
      result.rows.push_back(row);
      if (w == fit_workers) {
        fit_x.push_back(static_cast<double>(n));
        fit_y.push_back(secs);
      }
    }
  }
  if (fit_x.size() >= 2) {
    result.r2 = linear_fit(fit_x, fit_y, result.slope, result.intercept);
  }
  return result;
}

std::vector<BloomBenchRow> bench_bloom(const std::vector<std::size_t>& key_counts,
                                       std::size_t txns, double fp_rate) {
  std::vector<BloomBenchRow> rows;
  for (std::size_t n : key_counts) {
    std::vector<crypto::PublicKey> members;
    members.reserve(n);
    for (std::size_t i = 0; i < n; ++i) members.push_back(random_key());

    pubsub::BloomFilter filter = pubsub::build_filter(members, false, fp_rate);

    BloomBenchRow row;
    row.keys = n;
    row.txns = txns;
    for (const crypto::PublicKey& k : members) {
      if (!filter.contains(k.view())) ++row.false_negatives;
    }

    // Exact-set oracle over the member keys.
    std::unordered_set<crypto::PublicKey, crypto::PkHash> oracle(members.begin(),
                                                                 members.end());
    std::vector<std::pair<crypto::PublicKey, crypto::PublicKey>> probes;
    probes.reserve(txns);
    for (std::size_t i = 0; i < txns; ++i) probes.emplace_back(random_key(), random_key());

    std::size_t positives = 0;
    const double secs = time_once([&] {
      for (const auto& [sender, recipient] : probes) {
        positives += filter.contains(sender.view());
        positives += filter.contains(recipient.view());
      }
    });
    std::size_t true_positives = 0;
    for (const auto& [sender, recipient] : probes) {
      true_positives += oracle.contains(sender);
      true_positives += oracle.contains(recipient);
    }
    const double non_members = static_cast<double>(2 * txns - true_positives);
    row.measured_fp =
        non_members > 0 ? static_cast<double>(positives - true_positives) / non_members : 0.0;
    row.ns_per_txn = secs / static_cast<double>(txns) * 1e9;
    rows.push_back(row);
  }
  return rows;
}

std::vector<MessageBenchRow> bench_messages(int reps) {
  std::vector<MessageBenchRow> rows;
  const std::unordered_set<std::string> no_blacklist;

  crypto::KeyPair source = crypto::generate_identity();
  protocol::OwnerKeys owner{crypto::generate_identity(), crypto::generate_identity(),
                            crypto::generate_identity()};
  crypto::KeyPair requester = crypto::generate_identity();
  std::vector<crypto::KeyPair> endorsers;
  for (int i = 0; i < 10; ++i) endorsers.push_back(crypto::generate_identity());

  crypto::SignedEnvelope token = protocol::make_registration_token(owner.main, source.pub);
  protocol::Dot dot = protocol::make_dot(source, owner.main.pub, "bench-object",
                                         {{"type", "series"}},
                                         {protocol::DapKind::url, "mem://bench-object"});

  auto push = [&rows](std::string step, std::string role, std::string quantity,
                      unsigned cores, double seconds) -> MessageBenchRow& {
    rows.push_back({std::move(step), std::move(role), std::move(quantity), cores, seconds, 0.0});
    return rows.back();
  };

  // M1
  push("Message 1 (Create)", "Source", "N/A", 1,
       time_median([&] { protocol::make_m1(source, owner.main.pub, token, dot); }, reps));
  protocol::M1 m1 = protocol::make_m1(source, owner.main.pub, token, dot);
  push("Message 1 (Verify)", "Owner", "N/A", 1, time_median([&] {
         if (!protocol::verify_m1(m1, owner.main).ok()) {
           throw std::runtime_error("bench: m1 verify failed");
         }
       }, reps));

  // M2 verify at 1 and 10 endorsers
  protocol::Rt rt = protocol::make_rt(requester, "type=series", "", 3600, {});
  std::set<crypto::PublicKey> roots;
  for (const auto& e : endorsers) roots.insert(e.pub);
  std::vector<protocol::M2> m2s;
  for (std::size_t count : {std::size_t{1}, std::size_t{10}}) {
    std::vector<protocol::Endorsement> chain;
    for (std::size_t i = 0; i < count; ++i) {
      auto extended = protocol::endorse(rt, std::move(chain), endorsers[i], "ok");
      chain = std::move(*extended);
    }
    auto m2 = protocol::make_m2(rt, std::move(chain), requester);
    m2s.push_back(std::move(*m2));
  }
  double m2_prev = 0.0;
  for (std::size_t i = 0; i < m2s.size(); ++i) {
    const std::string qty = i == 0 ? "1 Endorser" : "10 Endorsers";
    const double secs = time_median([&] {
      if (!protocol::verify_m2(m2s[i], roots).ok()) {
        throw std::runtime_error("bench: m2 verify failed");
      }
    }, reps);
    auto& row = push("Message 2 (Verify)", "Owner", qty, 1, secs);
    if (i > 0 && m2_prev > 0) row.scale_ratio = secs / m2_prev;
    m2_prev = secs;
  }

  // Capability-scaled M3/M4 rows
  auto vreq = protocol::verify_m2(m2s[0], roots);
  const std::vector<std::size_t> cap_counts{1, 10, 100};
  std::vector<std::vector<std::pair<protocol::Dot, std::string>>> grant_sets;
  for (std::size_t n : cap_counts) {
    std::vector<std::pair<protocol::Dot, std::string>> grants;
    for (std::size_t i = 0; i < n; ++i) {
      grants.emplace_back(
          protocol::make_dot(source, owner.main.pub, "obj-" + std::to_string(n) + "-" + std::to_string(i),
                             {{"type", "series"}},
                             {protocol::DapKind::url, "mem://x"}),
          "type=series");
    }
    grant_sets.push_back(std::move(grants));
  }

  auto quantity_label = [](std::size_t n) {
    return std::to_string(n) + (n == 1 ? " Capability" : " Capabilities");
  };

  std::vector<protocol::M3> m3s;
  double prev = 0.0;
  for (std::size_t i = 0; i < cap_counts.size(); ++i) {
    const double secs = time_median(
        [&] { protocol::make_m3(owner, grant_sets[i], *vreq, 1); }, reps);
    auto& row = push("Message 3 (Create)", "Owner", quantity_label(cap_counts[i]), 1, secs);
    if (i > 0 && prev > 0) row.scale_ratio = secs / prev;
    prev = secs;
    m3s.push_back(std::move(*protocol::make_m3(owner, grant_sets[i], *vreq, 1)));
  }

  prev = 0.0;
  std::vector<std::vector<Bytes>> dat_sets;
  for (std::size_t i = 0; i < cap_counts.size(); ++i) {
    const double secs = time_median([&] {
      if (!protocol::verify_m3(m3s[i], requester).ok()) {
        throw std::runtime_error("bench: m3 verify failed");
      }
    }, reps);
    auto& row = push("Message 3 (Verify)", "Requester", quantity_label(cap_counts[i]), 1, secs);
    if (i > 0 && prev > 0) row.scale_ratio = secs / prev;
    prev = secs;
    auto tuples = protocol::verify_m3(m3s[i], requester);
    std::vector<Bytes> dats;
    for (const auto& t : *tuples) dats.push_back(t.dat);
    dat_sets.push_back(std::move(dats));
  }

  prev = 0.0;
  std::vector<protocol::M4> m4s;
  for (std::size_t i = 0; i < cap_counts.size(); ++i) {
    const double secs = time_median(
        [&] { protocol::make_m4(dat_sets[i], requester, source.pub); }, reps);
    auto& row = push("Message 4 (Create)", "Requester", quantity_label(cap_counts[i]), 1, secs);
    if (i > 0 && prev > 0) row.scale_ratio = secs / prev;
    prev = secs;
    m4s.push_back(std::move(*protocol::make_m4(dat_sets[i], requester, source.pub)));
  }

  prev = 0.0;
  for (std::size_t i = 0; i < cap_counts.size(); ++i) {
    const double secs = time_median([&] {
      auto d = protocol::authorize(m4s[i], source, no_blacklist, 1, 1);
      if (d.granted.size() != cap_counts[i]) {
        throw std::runtime_error("bench: m4 verify failed");
      }
    }, reps);
    auto& row = push("Message 4 (Verify)", "Source", quantity_label(cap_counts[i]), 1, secs);
    if (i > 0 && prev > 0) row.scale_ratio = secs / prev;
    prev = secs;
  }

  // Parallel-verify rows mirroring the multi-core entries of the cost table.
  {
    AuthFixture big = build_auth_fixture(1000, 10);
    for (auto [caps, m4ptr] : std::initializer_list<std::pair<std::size_t, const protocol::M4*>>{
             {100, &m4s[2]}, {1000, &big.m4}}) {
      const crypto::KeyPair& key = caps == 100 ? source : big.source;
      const double secs = time_median([&] {
        auto d = protocol::authorize(*m4ptr, key, no_blacklist, 1, 4);
        if (d.granted.size() != caps) throw std::runtime_error("bench: parallel verify failed");
      }, reps);
      push("Message 4 (Verify)", "Source", quantity_label(caps), 4, secs);
    }
  }

  // M5
  auto decision = protocol::authorize(m4s[0], source, no_blacklist, 1, 1);
  if (decision.granted.empty()) throw std::runtime_error("bench: no grant for m5");
  const protocol::GrantedAccess& access = decision.granted.front();
  push("Message 5 (Create)", "Source", "N/A", 1,
       time_median([&] { protocol::make_m5(source, access, 2); }, reps));
  protocol::M5 m5 = protocol::make_m5(source, access, 2);
  push("Message 5 (Verify)", "Owner", "N/A", 1, time_median([&] {
         if (!protocol::verify_m5(m5, owner.callback).ok()) {
           throw std::runtime_error("bench: m5 verify failed");
         }
       }, reps));

  return rows;
}

std::string to_csv(const AuthBenchResult& result) {
  std::ostringstream out;
  out << "capabilities,workers,owners,seconds,seconds_per_capability\n";
  for (const AuthBenchRow& r : result.rows) {
    out << r.capabilities << ',' << r.workers << ',' << r.owners << ',' << r.seconds
        << ',' << r.seconds_per_capability << '\n';
  }
  return out.str();
}

std::string to_csv(const std::vector<BloomBenchRow>& rows) {
  std::ostringstream out;
  out << "keys,txns,measured_fp,ns_per_txn,false_negatives\n";
  for (const BloomBenchRow& r : rows) {
    out << r.keys << ',' << r.txns << ',' << r.measured_fp << ',' << r.ns_per_txn << ','
        << r.false_negatives << '\n';
  }
  return out.str();
}

std::string to_csv(const std::vector<MessageBenchRow>& rows) {
  std::ostringstream out;
  out << "step,role,quantity,cores,seconds,scale_ratio\n";
  for (const MessageBenchRow& r : rows) {
    out << r.step << ',' << r.role << ',' << r.quantity << ',' << r.cores << ','
        << r.seconds << ',' << r.scale_ratio << '\n';
  }
  return out.str();
}

}  // namespace dusc::harness
