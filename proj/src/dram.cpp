#include "gmmu/dram.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace gmmu {

const char* to_string(DramQueue q) {
  switch (q) {
    case DramQueue::Golden:
      return "golden";
    case DramQueue::Silver:
      return "silver";
    case DramQueue::Normal:
      return "normal";
    case DramQueue::Single:
      return "single";
  }
  return "?";
}

DramCoord decode_line(std::uint64_t line, const DramGeometry& g, std::uint32_t channel_base,
                      std::uint32_t channel_count) {
  const std::uint32_t count = channel_count ? channel_count : g.channels;
  const std::uint64_t lines_per_row = std::max<std::uint64_t>(1, g.row_bytes / g.line_bytes);
  DramCoord c;
  c.channel = channel_base + static_cast<std::uint32_t>(line % count);
  const std::uint64_t local = line / count;
  c.bank = static_cast<std::uint32_t>((local / lines_per_row) % g.banks);
  c.row = local / (lines_per_row * g.banks);
  return c;
}

std::optional<std::size_t> frfcfs_pick(std::span<const DramRequest> queue,
                                       std::span<const BankState> banks, Cycle now) {
  std::optional<std::size_t> oldest;
  for (std::size_t i = 0; i < queue.size(); ++i) {
    const BankState& bank = banks[queue[i].coord.bank];
    if (bank.ready > now) continue;
    if (bank.open_row && *bank.open_row == queue[i].coord.row) return i;
    if (!oldest) oldest = i;
  }
  return oldest;
}

std::vector<std::uint32_t> compute_quotas(std::uint32_t thres_max,
                                          std::span<const QuotaInput> apps) {
  std::vector<std::uint32_t> out(apps.size(), 0);
  if (apps.empty()) return out;
  std::uint64_t total = 0;
  for (const auto& a : apps) total += a.concurrent * a.warps_stalled;
  for (std::size_t i = 0; i < apps.size(); ++i) {
    if (total == 0) {
      out[i] = static_cast<std::uint32_t>(thres_max / apps.size());
    } else {
      const std::uint64_t product = apps[i].concurrent * apps[i].warps_stalled;
      out[i] = static_cast<std::uint32_t>(static_cast<std::uint64_t>(thres_max) * product / total);
    }
  }
  return out;
}

SilverRotation::SilverRotation(std::size_t apps, std::uint32_t thres_max, Cycle idle_window)
    : last_arrival_(apps, 0), epoch_admissions_(apps, 0), idle_window_(idle_window) {
  std::vector<QuotaInput> none(apps);
  quotas_ = compute_quotas(thres_max, none);
  if (!quotas_.empty()) begin_turn(0, 0);
}

void SilverRotation::begin_turn(std::size_t app, Cycle now) {
  current_ = app;
  remaining_ = quotas_[app];
  turn_start_ = now;
  turns_.push_back(Turn{app, remaining_, 0, now});
}

void SilverRotation::advance(Cycle now) {
  const std::size_t n = quotas_.size();
  for (std::size_t step = 1; step <= n; ++step) {
    const std::size_t candidate = (current_ + step) % n;
    if (quotas_[candidate] > 0) {
      begin_turn(candidate, now);
      return;
    }
  }
  // Every quota is zero: the silver queue stays closed.
  remaining_ = 0;
  turn_start_ = now;
}

void SilverRotation::set_quotas(std::vector<std::uint32_t> quotas, Cycle now) {
  if (quotas.size() != quotas_.size()) throw std::invalid_argument("SilverRotation: app count");
  quotas_ = std::move(quotas);
  if (quotas_[current_] > 0) {
    begin_turn(current_, now);
  } else {
    advance(now);
  }
}

void SilverRotation::admit(Cycle now) {
  if (remaining_ == 0) throw std::logic_error("SilverRotation: admit without quota");
  --remaining_;
  ++turns_.back().admitted;
  ++epoch_admissions_[current_];
  if (remaining_ == 0) advance(now);
}

void SilverRotation::note_arrival(std::size_t app, Cycle now) { last_arrival_[app] = now; }

void SilverRotation::tick(Cycle now) {
  if (quotas_.size() < 2) return;
  // Hand-offs take effect when the window expired, even if the caller skipped
  // ahead over idle cycles.
  for (std::size_t i = 0; i < quotas_.size(); ++i) {
    const Cycle expiry = std::max(turn_start_, last_arrival_[current_]) + idle_window_;
    if (now < expiry) return;
    advance(expiry);
  }
}

void SilverRotation::reset_epoch_admissions() {
  std::fill(epoch_admissions_.begin(), epoch_admissions_.end(), 0);
}

DramChannel::DramChannel(const DramConfig& cfg) : cfg_(&cfg), banks_(cfg.geometry.banks) {}

std::size_t DramChannel::capacity(DramQueue q) const {
  switch (q) {
    case DramQueue::Golden:
      return cfg_->queues.golden;
    case DramQueue::Silver:
      return cfg_->queues.silver;
    case DramQueue::Normal:
      return cfg_->queues.normal;
    case DramQueue::Single:
      return cfg_->queues.single;
  }
  return 0;
}

bool DramChannel::push(DramQueue q, DramRequest req, Cycle now) {
  auto& target = queue(q);
  if (target.size() >= capacity(q)) return false;
  req.queue = q;
  target.push_back(req);
  next_attempt_ = std::min(next_attempt_, now);
  return true;
}

bool DramChannel::empty() const {
  for (const auto& q : queues_) {
    if (!q.empty()) return false;
  }
  return true;
}

Cycle DramChannel::earliest_bank_ready(Cycle now) const {
  Cycle best = std::numeric_limits<Cycle>::max();
  for (const auto& q : queues_) {
    for (const auto& r : q) best = std::min(best, banks_[r.coord.bank].ready);
  }
  return std::max(best, now + 1);
}

DramIssue DramChannel::service(DramQueue q, std::size_t index, Cycle now) {
  auto& src = queue(q);
  DramIssue out;
  out.req = src[index];
  src.erase(src.begin() + static_cast<std::ptrdiff_t>(index));
  const DramTiming& t = cfg_->timing;
  BankState& bank = banks_[out.req.coord.bank];
  Cycle latency;
  if (t.policy == RowPolicy::Closed) {
    latency = t.row_closed;
    bank.ready = now + (t.row_closed - std::min(t.row_closed, t.row_hit)) + t.burst;
    bank.open_row.reset();
  } else {
    out.row_hit = bank.open_row && *bank.open_row == out.req.coord.row;
    latency = out.row_hit ? t.row_hit : t.row_miss;
    bank.ready = now + (out.row_hit ? t.burst : (t.row_miss - std::min(t.row_miss, t.row_hit)) + t.burst);
    bank.open_row = out.req.coord.row;
  }
  const Cycle data_start = std::max(now + latency - std::min(latency, t.burst), bus_free_);
  out.completion = data_start + t.burst;
  bus_free_ = out.completion;
  out.issued = now;
  return out;
}

std::optional<DramIssue> DramChannel::schedule(Cycle now) {
  if (now < next_attempt_) return std::nullopt;
  bool golden_waiting = false;
  bool golden_head_ready = false;
  std::optional<DramIssue> issued;
  if (cfg_->scheduler == SchedulerKind::Mask) {
    const auto& golden = queue(DramQueue::Golden);
    golden_waiting = !golden.empty();
    golden_head_ready = golden_waiting && banks_[golden.front().coord.bank].ready <= now;
    if (golden_head_ready) {
      issued = service(DramQueue::Golden, 0, now);
    } else if (auto i = frfcfs_pick(queue(DramQueue::Silver), banks_, now)) {
      issued = service(DramQueue::Silver, *i, now);
    } else if (auto j = frfcfs_pick(queue(DramQueue::Normal), banks_, now)) {
      issued = service(DramQueue::Normal, *j, now);
    }
  } else if (auto k = frfcfs_pick(queue(DramQueue::Single), banks_, now)) {
    issued = service(DramQueue::Single, *k, now);
  }
  if (issued) {
    issued->golden_waiting = golden_waiting;
    issued->golden_head_ready = golden_head_ready;
    next_attempt_ = now + 1;
  } else {
    next_attempt_ = earliest_bank_ready(now);
  }
  return issued;
}

DramController::DramController(const DramConfig& cfg, std::size_t num_apps,
                               std::optional<ChannelPartition> partition)
    : cfg_(cfg),
      partition_(std::move(partition)),
      staging_(cfg.geometry.channels),
      busy_(cfg.geometry.channels, 0),
      rotation_(num_apps, cfg.thres_max, cfg.silver_idle_window) {
  if (cfg.geometry.channels == 0 || cfg.geometry.banks == 0) {
    throw std::invalid_argument("DramController: empty geometry");
  }
  channels_.reserve(cfg.geometry.channels);
  for (std::uint32_t c = 0; c < cfg.geometry.channels; ++c) channels_.emplace_back(cfg_);
}

DramCoord DramController::decode(std::uint64_t line, std::size_t app) const {
  if (partition_ && app < partition_->ranges.size()) {
    const auto [base, count] = partition_->ranges[app];
    return decode_line(line, cfg_.geometry, base, count);
  }
  return decode_line(line, cfg_.geometry);
}

DramQueue DramController::route(const DramRequest& req) const {
  if (cfg_.scheduler == SchedulerKind::FrFcfs) return DramQueue::Single;
  if (req.walk_depth != 0) return DramQueue::Golden;
  return rotation_.eligible(req.app) ? DramQueue::Silver : DramQueue::Normal;
}

std::optional<DramQueue> DramController::enqueue(DramRequest req, Cycle now) {
  req.coord = decode(req.line, req.app);
  const DramQueue q = route(req);
  req.seq = seq_++;
  req.enqueued = now;
  if (!channels_[req.coord.channel].push(q, req, now)) {
    --seq_;
    return std::nullopt;
  }
  if (q == DramQueue::Silver) rotation_.admit(now);
  ++stats_.admissions[static_cast<int>(q)];
  refresh_busy(req.coord.channel);
  return q;
}

void DramController::submit(DramRequest req, Cycle now) {
  req.arrival = now;
  ++submitted_;
  if (req.walk_depth == 0) rotation_.note_arrival(req.app, now);
  const DramCoord coord = decode(req.line, req.app);
  auto& stage = staging_[coord.channel][req.walk_depth ? 0 : 1];
  if (stage.empty() && enqueue(req, now)) return;
  ++stats_.backpressure;
  stage.push_back(req);
  refresh_busy(coord.channel);
}

void DramController::drain_staging(std::size_t channel, Cycle now) {
  for (auto& stage : staging_[channel]) {
    while (!stage.empty() && enqueue(stage.front(), now)) stage.pop_front();
  }
}

void DramController::refresh_busy(std::size_t channel) {
  const bool b = !channels_[channel].empty() || !staging_[channel][0].empty() ||
                 !staging_[channel][1].empty();
  if (b != static_cast<bool>(busy_[channel])) {
    busy_[channel] = b;
    if (b) {
      ++busy_channels_;
    } else {
      --busy_channels_;
    }
  }
}

void DramController::tick(Cycle now) {
  if (cfg_.scheduler == SchedulerKind::Mask) rotation_.tick(now);
}

void DramController::step(Cycle now, std::vector<DramIssue>& issued) {
  tick(now);
  if (busy_channels_ == 0) return;
  for (std::size_t c = 0; c < channels_.size(); ++c) {
    if (!busy_[c]) continue;
    drain_staging(c, now);
    if (auto issue = channels_[c].schedule(now)) {
      DramClassStats& cls = issue->req.walk_depth ? stats_.translation : stats_.data;
      ++cls.serviced;
      cls.bytes += cfg_.geometry.line_bytes;
      cls.latency_sum += issue->completion - issue->req.arrival;
      cls.row_hits += issue->row_hit ? 1 : 0;
      const std::uint64_t uid = issue->req.uid;
      if (uid >= service_count_.size()) service_count_.resize(uid + 1 + uid / 2, 0);
      if (service_count_[uid] < 255) ++service_count_[uid];
      issued.push_back(*issue);
    }
    refresh_busy(c);
  }
}

void DramController::epoch_update(std::span<const QuotaInput> counters, Cycle now) {
  rotation_.set_quotas(compute_quotas(cfg_.thres_max, counters), now);
  rotation_.reset_epoch_admissions();
}

Cycle DramController::next_event(Cycle now) const {
  Cycle best = std::numeric_limits<Cycle>::max();
  for (std::size_t c = 0; c < channels_.size(); ++c) {
    if (!busy_[c]) continue;
    if (!staging_[c][0].empty() || !staging_[c][1].empty()) return now;
    best = std::min(best, std::max(now, channels_[c].next_attempt()));
  }
  return best;
}

DramAudit DramController::audit() const {
  DramAudit a;
  a.submitted = submitted_;
  for (auto n : service_count_) {
    a.serviced += n ? 1 : 0;
    a.duplicates += n > 1 ? n - 1 : 0;
  }
  for (std::size_t c = 0; c < channels_.size(); ++c) {
    for (auto q : {DramQueue::Golden, DramQueue::Silver, DramQueue::Normal, DramQueue::Single}) {
      a.pending += channels_[c].occupancy(q);
    }
    a.pending += staging_[c][0].size() + staging_[c][1].size();
  }
  return a;
}

}  // namespace gmmu
