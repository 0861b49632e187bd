#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dkf/decomposition.hpp"

namespace dkf {

// Pipeline phases, used to attribute traffic.
enum class Phase { fusion, dici_matrix, dici_vector, prediction, exchange, other };
const char* phase_name(Phase p);

struct Message {
  int src = 0;
  int dst = 0;
  Phase phase = Phase::other;
  std::vector<double> payload;
  int tag = 0;
};

struct TrafficTotals {
  long long messages = 0;
  long long scalars = 0;
  long long hop_scalars = 0;  // scalars weighted by path length
};

// Deterministic synchronous-rounds message fabric over an undirected
// communication graph. Messages only traverse graph edges; multi-hop sends
// are relayed along shortest paths (ties broken by lowest next-hop id) and
// counted per hop. No sensor reads a round-r message before every round-(r-1)
// send is delivered: outboxes are swapped into inboxes at the round barrier.
class CommNetwork {
 public:
  explicit CommNetwork(const CommGraph& graph, int max_payload_scalars);

  int num_sensors() const { return static_cast<int>(graph_.adj.size()); }
  int round() const { return round_; }
  void set_phase(Phase p) { phase_ = p; }

  // Queue a message for delivery at the next barrier. Throws when no route
  // exists; asserts the payload bound (no n-dimensional payloads).
  void send(int src, int dst, std::vector<double> payload, int tag = 0);

  // Runs every sensor's compute against its inbox, then delivers the
  // accumulated outboxes and advances the round counter.
  using Compute = std::function<void(int sensor, const std::vector<Message>& inbox)>;
  void run_round(const Compute& compute);

  // Deliver queued sends without running compute closures (used between
  // pipeline stages).
  void flush();

  const std::vector<Message>& inbox(int sensor) const { return inboxes_[sensor]; }

  int hops(int src, int dst) const;

  // Accounting-only send for kernels that exchange values through shared
  // simulation state; counts the same traffic a literal message would.
  void record(int src, int dst, Phase phase, long long scalars);

  // `count` messages of `scalars` each between the same pair, logged as one
  // aggregate row.
  void record_bulk(int src, int dst, Phase phase, long long scalars, long long count);

  TrafficTotals totals() const;
  TrafficTotals totals(Phase phase) const;
  long long sensor_scalars(int sensor) const { return per_sensor_scalars_[sensor]; }
  long long max_payload_seen() const { return max_payload_seen_; }

  std::string traffic_report() const;       // totals by phase and by sensor
  std::string message_log_csv() const;      // round,phase,src,dst,hops,scalars
  void reset_counters();

 private:
  struct LogRow {
    int round, src, dst, hops;
    Phase phase;
    long long scalars;
  };
  static constexpr std::size_t kLogCap = 2'000'000;

  void account(int src, int dst, Phase phase, long long scalars, long long count);

  CommGraph graph_;
  std::vector<std::vector<int>> next_hop_;  // routing table
  std::vector<std::vector<int>> dist_;
  std::vector<std::vector<Message>> inboxes_;
  std::vector<std::vector<Message>> outboxes_;
  std::vector<LogRow> log_;
  std::vector<TrafficTotals> phase_totals_;
  std::vector<long long> per_sensor_scalars_;
  long long max_payload_seen_ = 0;
  int max_payload_ = 0;
  int round_ = 0;
  Phase phase_ = Phase::other;
};

}  // namespace dkf
