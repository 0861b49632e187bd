#include "dkf/simulator.hpp"

#include <deque>
#include <limits>
#include <sstream>

#include "dkf/errors.hpp"

namespace dkf {

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::fusion: return "fusion";
    case Phase::dici_matrix: return "dici_matrix";
    case Phase::dici_vector: return "dici_vector";
    case Phase::prediction: return "prediction";
    case Phase::exchange: return "exchange";
    default: return "other";
  }
}

CommNetwork::CommNetwork(const CommGraph& graph, int max_payload_scalars)
    : graph_(graph), max_payload_(max_payload_scalars) {
  const int N = graph_.num_sensors;
  inboxes_.resize(N);
  outboxes_.resize(N);
  per_sensor_scalars_.assign(N, 0);
  phase_totals_.assign(6, TrafficTotals{});

  // BFS from every source; ties broken by visiting neighbors in ascending id
  // order, which makes the lowest-id next hop win.
  next_hop_.assign(N, std::vector<int>(N, -1));
  dist_.assign(N, std::vector<int>(N, std::numeric_limits<int>::max()));
  for (int s = 0; s < N; ++s) {
    dist_[s][s] = 0;
    std::deque<int> q{s};
    std::vector<int> parent(N, -1);
    while (!q.empty()) {
      int v = q.front();
      q.pop_front();
      for (int u : graph_.adj[v])
        if (dist_[s][u] == std::numeric_limits<int>::max()) {
          dist_[s][u] = dist_[s][v] + 1;
          parent[u] = v;
          q.push_back(u);
        }
    }
    for (int d = 0; d < N; ++d) {
      if (d == s || dist_[s][d] == std::numeric_limits<int>::max()) continue;
      int v = d;  // walk back to find the first hop out of s
      while (parent[v] != s) v = parent[v];
      next_hop_[s][d] = v;
    }
  }
}

int CommNetwork::hops(int src, int dst) const {
  if (dist_[src][dst] == std::numeric_limits<int>::max())
    throw Error("comm network: no route from " + std::to_string(src) + " to " +
                std::to_string(dst));
  return dist_[src][dst];
}

void CommNetwork::account(int src, int dst, Phase phase, long long scalars, long long count) {
  const int h = hops(src, dst);
  auto& t = phase_totals_[static_cast<int>(phase)];
  t.messages += count;
  t.scalars += scalars * count;
  t.hop_scalars += scalars * count * h;
  per_sensor_scalars_[src] += scalars * count;
  max_payload_seen_ = std::max(max_payload_seen_, scalars);
  // Keep the detailed log bounded; counters above are always exact.
  if (log_.size() < kLogCap) log_.push_back({round_, src, dst, h, phase, scalars * count});
}

void CommNetwork::send(int src, int dst, std::vector<double> payload, int tag) {
  if (static_cast<int>(payload.size()) > max_payload_)
    throw Error("comm network: payload of " + std::to_string(payload.size()) +
                " scalars exceeds the locality bound " + std::to_string(max_payload_));
  account(src, dst, phase_, static_cast<long long>(payload.size()), 1);
  outboxes_[dst].push_back(Message{src, dst, phase_, std::move(payload), tag});
}

void CommNetwork::record(int src, int dst, Phase phase, long long scalars) {
  record_bulk(src, dst, phase, scalars, 1);
}

void CommNetwork::record_bulk(int src, int dst, Phase phase, long long scalars, long long count) {
  if (src == dst || count == 0) return;
  if (scalars > max_payload_)
    throw Error("comm network: recorded payload of " + std::to_string(scalars) +
                " scalars exceeds the locality bound " + std::to_string(max_payload_));
  account(src, dst, phase, scalars, count);
}

void CommNetwork::flush() {
  for (int s = 0; s < num_sensors(); ++s) {
    inboxes_[s] = std::move(outboxes_[s]);
    outboxes_[s].clear();
  }
  ++round_;
}

void CommNetwork::run_round(const Compute& compute) {
  for (int s = 0; s < num_sensors(); ++s) compute(s, inboxes_[s]);
  flush();
}

TrafficTotals CommNetwork::totals() const {
  TrafficTotals t;
  for (const auto& pt : phase_totals_) {
    t.messages += pt.messages;
    t.scalars += pt.scalars;
    t.hop_scalars += pt.hop_scalars;
  }
  return t;
}

TrafficTotals CommNetwork::totals(Phase phase) const {
  return phase_totals_[static_cast<int>(phase)];
}

std::string CommNetwork::traffic_report() const {
  std::ostringstream os;
  os << "phase,messages,scalars,hop_scalars\n";
  for (int p = 0; p < 6; ++p) {
    const auto& t = phase_totals_[p];
    os << phase_name(static_cast<Phase>(p)) << ',' << t.messages << ',' << t.scalars << ','
       << t.hop_scalars << '\n';
  }
  os << "sensor,scalars\n";
  for (int s = 0; s < num_sensors(); ++s) os << s << ',' << per_sensor_scalars_[s] << '\n';
  return os.str();
}

std::string CommNetwork::message_log_csv() const {
  std::ostringstream os;
  os << "round,phase,src,dst,hops,scalars\n";
  for (const auto& r : log_)
    os << r.round << ',' << phase_name(r.phase) << ',' << r.src << ',' << r.dst << ',' << r.hops
       << ',' << r.scalars << '\n';
  return os.str();
}

void CommNetwork::reset_counters() {
  log_.clear();
  phase_totals_.assign(6, TrafficTotals{});
  per_sensor_scalars_.assign(num_sensors(), 0);
  max_payload_seen_ = 0;
}

}  // namespace dkf
