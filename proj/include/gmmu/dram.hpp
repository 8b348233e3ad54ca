#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "gmmu/types.hpp"

namespace gmmu {

enum class RowPolicy { Open, Closed };
enum class SchedulerKind { FrFcfs, Mask };
enum class DramQueue : std::uint8_t { Golden = 0, Silver = 1, Normal = 2, Single = 3 };

const char* to_string(DramQueue q);

struct DramGeometry {
  std::uint32_t channels = 8;
  std::uint32_t banks = 8;
  std::uint64_t row_bytes = 2048;
  std::uint64_t line_bytes = 128;
};

// Lumped timing in core cycles. A row miss covers precharge + activate + CAS.
struct DramTiming {
  Cycle row_hit = 24;
  Cycle row_miss = 60;
  Cycle row_closed = 44;
  Cycle burst = 4;
  RowPolicy policy = RowPolicy::Open;
};

struct DramQueueSizes {
  std::size_t golden = 16;
  std::size_t silver = 64;
  std::size_t normal = 192;
  std::size_t single = 256;
};

struct DramConfig {
  DramGeometry geometry;
  DramTiming timing;
  DramQueueSizes queues;
  SchedulerKind scheduler = SchedulerKind::FrFcfs;
  std::uint32_t thres_max = 500;
  Cycle silver_idle_window = 1000;
};

struct DramCoord {
  std::uint32_t channel = 0;
  std::uint32_t bank = 0;
  std::uint64_t row = 0;
};

// Line-interleaved channels, then consecutive lines of a row, then banks.
// `channel_base/channel_count` restrict an address to a channel subset.
DramCoord decode_line(std::uint64_t line, const DramGeometry& g, std::uint32_t channel_base = 0,
                      std::uint32_t channel_count = 0);

struct DramRequest {
  std::uint32_t id = 0;    // caller's handle
  std::uint64_t uid = 0;   // unique per submission, used by the audit
  std::size_t app = 0;
  std::uint8_t walk_depth = 0;
  bool is_write = false;
  std::uint64_t line = 0;
  Cycle arrival = 0;
  // Filled in by the controller.
  DramCoord coord;
  std::uint64_t seq = 0;
  Cycle enqueued = 0;
  DramQueue queue = DramQueue::Single;
};

struct BankState {
  std::optional<std::uint64_t> open_row;
  Cycle ready = 0;
};

struct DramIssue {
  DramRequest req;
  Cycle issued = 0;
  Cycle completion = 0;
  bool row_hit = false;
  // Golden-queue state observed just before this pick.
  bool golden_waiting = false;
  bool golden_head_ready = false;
};

// First-ready FCFS: oldest issuable row hit, else oldest issuable request.
// `queue` must be in arrival order.
std::optional<std::size_t> frfcfs_pick(std::span<const DramRequest> queue,
                                       std::span<const BankState> banks, Cycle now);

struct QuotaInput {
  std::uint64_t concurrent = 0;     // max concurrent walks this epoch
  std::uint64_t warps_stalled = 0;  // max warps stalled on one TLB miss
};

// thres_i = floor(thres_max * C_i * W_i / sum_j C_j * W_j); equal split when
// every product is zero.
std::vector<std::uint32_t> compute_quotas(std::uint32_t thres_max,
                                          std::span<const QuotaInput> apps);

// Which application currently owns the silver queue and how much of its
// quota is left. Quotas are consumed per turn.
class SilverRotation {
 public:
  struct Turn {
    std::size_t app = 0;
    std::uint32_t quota = 0;
    std::uint32_t admitted = 0;
    Cycle start = 0;
  };

  SilverRotation(std::size_t apps, std::uint32_t thres_max, Cycle idle_window);

  void set_quotas(std::vector<std::uint32_t> quotas, Cycle now);
  bool eligible(std::size_t app) const { return app == current_ && remaining_ > 0; }
  // Consumes one unit of the current turn's quota.
  void admit(Cycle now);
  void note_arrival(std::size_t app, Cycle now);
  // Hands the turn on when the owner has gone quiet.
  void tick(Cycle now);

  std::size_t current() const { return current_; }
  std::uint32_t remaining() const { return remaining_; }
  const std::vector<std::uint32_t>& quotas() const { return quotas_; }
  const std::vector<Turn>& turns() const { return turns_; }
  const std::vector<std::uint64_t>& epoch_admissions() const { return epoch_admissions_; }
  void reset_epoch_admissions();

 private:
  void begin_turn(std::size_t app, Cycle now);
  void advance(Cycle now);

  std::vector<std::uint32_t> quotas_;
  std::vector<Cycle> last_arrival_;
  std::vector<std::uint64_t> epoch_admissions_;
  std::vector<Turn> turns_;
  Cycle idle_window_;
  std::size_t current_ = 0;
  std::uint32_t remaining_ = 0;
  Cycle turn_start_ = 0;
};

struct DramClassStats {
  std::uint64_t serviced = 0;
  std::uint64_t bytes = 0;
  std::uint64_t latency_sum = 0;
  std::uint64_t row_hits = 0;

  double mean_latency() const {
    return serviced ? static_cast<double>(latency_sum) / static_cast<double>(serviced) : 0.0;
  }
  bool operator==(const DramClassStats&) const = default;
};

struct DramStats {
  DramClassStats data;         // walk_depth == 0
  DramClassStats translation;  // walk_depth >= 1
  std::array<std::uint64_t, 4> admissions{};
  std::uint64_t backpressure = 0;  // submissions that had to wait for space
  bool operator==(const DramStats&) const = default;
};

struct DramAudit {
  std::uint64_t submitted = 0;
  std::uint64_t serviced = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t pending = 0;
  bool ok() const { return duplicates == 0 && submitted == serviced + pending; }
  bool operator==(const DramAudit&) const = default;
};

class DramChannel {
 public:
  DramChannel(const DramConfig& cfg);

  std::size_t occupancy(DramQueue q) const { return queue(q).size(); }
  std::size_t capacity(DramQueue q) const;
  bool push(DramQueue q, DramRequest req, Cycle now);
  std::optional<DramIssue> schedule(Cycle now);
  bool empty() const;
  Cycle next_attempt() const { return next_attempt_; }
  const std::vector<BankState>& banks() const { return banks_; }

 private:
  std::vector<DramRequest>& queue(DramQueue q) { return queues_[static_cast<int>(q)]; }
  const std::vector<DramRequest>& queue(DramQueue q) const {
    return queues_[static_cast<int>(q)];
  }
  DramIssue service(DramQueue q, std::size_t index, Cycle now);
  Cycle earliest_bank_ready(Cycle now) const;

  const DramConfig* cfg_;
  std::array<std::vector<DramRequest>, 4> queues_;
  std::vector<BankState> banks_;
  Cycle bus_free_ = 0;
  Cycle next_attempt_ = 0;
};

// Optional static split of channels between applications.
struct ChannelPartition {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> ranges;  // (base, count)
};

class DramController {
 public:
  DramController(const DramConfig& cfg, std::size_t num_apps,
                 std::optional<ChannelPartition> partition = std::nullopt);

  DramController(const DramController&) = delete;
  DramController& operator=(const DramController&) = delete;

  DramCoord decode(std::uint64_t line, std::size_t app) const;
  // Queue this request would enter right now, ignoring occupancy.
  DramQueue route(const DramRequest& req) const;
  // Places the request in its queue; nullopt means QueueFull (request not
  // taken, quota not consumed).
  std::optional<DramQueue> enqueue(DramRequest req, Cycle now);
  // Upstream entry point: a request that does not fit waits in a per-channel
  // staging FIFO (translation and data separately) and is retried each cycle.
  void submit(DramRequest req, Cycle now);
  // Silver-turn idle handoff; step() calls it too.
  void tick(Cycle now);
  void step(Cycle now, std::vector<DramIssue>& issued);
  void epoch_update(std::span<const QuotaInput> counters, Cycle now);

  bool busy() const { return busy_channels_ != 0; }
  // Earliest cycle at which step() may do useful work.
  Cycle next_event(Cycle now) const;
  const DramStats& stats() const { return stats_; }
  DramAudit audit() const;
  const SilverRotation& rotation() const { return rotation_; }
  const DramChannel& channel(std::size_t c) const { return channels_[c]; }
  const DramConfig& config() const { return cfg_; }

 private:
  void drain_staging(std::size_t channel, Cycle now);
  void refresh_busy(std::size_t channel);

  DramConfig cfg_;
  std::optional<ChannelPartition> partition_;
  std::vector<DramChannel> channels_;
  std::vector<std::array<std::deque<DramRequest>, 2>> staging_;
  std::vector<std::uint8_t> busy_;
  std::size_t busy_channels_ = 0;
  SilverRotation rotation_;
  DramStats stats_;
  std::vector<std::uint8_t> service_count_;
  std::uint64_t submitted_ = 0;
  std::uint64_t seq_ = 0;
};

}  // namespace gmmu
