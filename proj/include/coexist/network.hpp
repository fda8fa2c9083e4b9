// One replication of one step: Wi-Fi DCF nodes and LAA eNBs contending on a
// shared unlicensed carrier, driven by the event kernel.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "coexist/config.hpp"
#include "coexist/laa_mac.hpp"
#include "coexist/medium.hpp"
#include "coexist/metrics.hpp"
#include "coexist/sim_core.hpp"
#include "coexist/topology.hpp"
#include "coexist/traffic.hpp"
#include "coexist/wifi_mac.hpp"

namespace coexist {

// ---------------------------------------------------------------------------
// Trace records kept for invariant checking

struct SenseInterval {
  SimTime from;
  SimTime to;
  double threshold_dbm = 0;
};

struct GapRecord {
  SimTime from;
  SimTime to;
  bool idle = false;
};

struct LaaBurstRecord {
  std::uint64_t burst_id = 0;
  int node = -1;
  SimTime grant;
  SenseInterval final_sense;
  SimTime tx_start;  // reservation start, or data start without reservation
  SimTime data_start;
  SimTime end;       // end of the last transmitted piece
  SimTime airtime;   // total on-air time, gaps excluded
  std::int64_t mcot_us = 0;
  std::vector<int> segment_symbols;  // as transmitted
  std::vector<GapRecord> gaps;
  bool aborted = false;
  int cws_at_access = 0;
};

struct WifiTxRecord {
  int node = -1;
  int dst = -1;
  SimTime start;
  SimTime end;
  SenseInterval final_sense;
  bool retry = false;
  bool decoded = false;
  std::uint64_t tx_id = 0;
};

struct DrsRecord {
  int node = -1;
  SimTime start;
  SimTime end;
  SimTime check_from;
  SimTime check_to;
  std::int64_t occasion = 0;
};

struct BackoffDraw {
  int node = -1;
  int counter = 0;
  int window = 0;
  bool laa = false;
};

struct SimTrace {
  std::vector<LaaBurstRecord> laa_bursts;
  std::vector<WifiTxRecord> wifi_tx;
  std::vector<DrsRecord> drs;
  std::vector<BackoffDraw> draws;
  std::vector<int> cws_observed;
  std::vector<int> dcf_cw_observed;
  std::int64_t drs_with_burst = 0;
  std::int64_t wifi_collisions = 0;
  std::int64_t wifi_attempts = 0;
  std::array<std::int64_t, 3> harq_counts{};  // ACK, NACK, DTX over all transmitted segments
};

// ---------------------------------------------------------------------------
// Per-operator results

struct OperatorOutcome {
  int operator_id = 0;
  Technology technology = Technology::WiFi;
  std::vector<metrics::FileRecord> files;  // completed FTP files carried on the unlicensed carrier
  std::int64_t files_dropped = 0;
  std::int64_t files_incomplete = 0;
  std::vector<std::vector<double>> voip_delays_ms;  // per VoIP user
  double mean_occupancy = 0;
  std::vector<double> ap_occupancy;
  double channel_occupancy_pct = std::nan("");
  std::vector<SimTime> ftp_arrivals;  // all FTP arrival instants, for paired-seed checks
};

struct SimOptions {
  int step = 1;
  double dl_lambda_per_s = 1.0;
  SimTime duration = SimTime::from_s(10);
  bool keep_medium_log = false;
  std::ostream* event_log = nullptr;  // first `event_log_limit` dispatches, one line each
  std::size_t event_log_limit = 200000;
};

inline std::array<Technology, 2> step_technologies(int step) {
  if (step == 1) return {Technology::WiFi, Technology::WiFi};
  if (step == 2) return {Technology::WiFi, Technology::LAA};
  throw std::invalid_argument("step must be 1 or 2");
}

class Simulation {
 public:
  Simulation(const ScenarioConfig& cfg, std::uint64_t replication_seed, SimOptions opt)
      : cfg_(cfg), seed_(replication_seed), opt_(opt), techs_(step_technologies(opt.step)) {
    cfg_.validate();
    RngStream topo_rng(seed_, "topology");
    topo_ = build_indoor_topology(cfg_, topo_rng, seed_, techs_);
    medium_ = std::make_unique<Medium>(cfg_.channel, topo_.nodes, seed_);
    medium_->keep_log(opt_.keep_medium_log);
    init_nodes();
    init_traffic();
    q_.set_observer([this](const DispatchRecord& r) { observe(r); });
  }

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  void run() {
    if (ran_) throw std::logic_error("Simulation::run called twice");
    ran_ = true;
    schedule_tick(SimTime::from_ms(1));
    for (auto& n : nodes_)
      if (n.kind == NodeKind::LaaEnb && cfg_.lbt.drs_enabled) schedule_drs_occasion(n.id, 0);
    q_.run_until(opt_.duration);
    finalize();
  }

  const Topology& topology() const { return topo_; }
  const Medium& medium() const { return *medium_; }
  const SimTrace& trace() const { return trace_; }
  const std::array<OperatorOutcome, 2>& outcomes() const { return outcomes_; }
  std::uint64_t event_digest() const { return digest_; }
  std::uint64_t events_dispatched() const { return dispatched_; }
  const std::vector<traffic::Job>& jobs() const { return jobs_; }
  std::array<Technology, 2> technologies() const { return techs_; }
  double ed_threshold_laa_dbm() const { return laa_threshold_dbm_; }

  /// Conservation check: every job's bytes are delivered, queued/in flight or dropped.
  bool bytes_balanced() const {
    for (const auto& j : jobs_)
      if (j.delivered + j.queued + j.in_flight + j.dropped != j.bytes) return false;
    return true;
  }

  traffic::FlowLedger ledger(traffic::FlowKind kind) const {
    traffic::FlowLedger l;
    for (const auto& j : jobs_) {
      if (j.kind != kind) continue;
      l.generated += j.bytes;
      l.delivered += j.delivered;
      l.in_flight += j.queued + j.in_flight;
      l.dropped += j.dropped;
    }
    return l;
  }

 private:
  // -------------------------------------------------------------------------
  struct WifiFrame {
    std::uint64_t job = 0;
    std::int64_t bytes = 0;
    int dst = -1;
    double rate = 0;
    std::uint64_t tx_id = 0;
    bool active = false;
    bool retry = false;
    std::size_t record = 0;  // index into trace_.wifi_tx
  };

  struct SegmentAlloc {
    int ue = -1;
    double rate = 0;
    std::vector<std::pair<std::uint64_t, std::int64_t>> chunks;  // (job, bytes)
  };

  struct PlannedSegment {
    laa::SubframeSegment seg;
    std::vector<std::pair<SimTime, SimTime>> intervals;  // on-air intervals after gap shifts
    std::vector<SegmentAlloc> allocs;
    bool sent = false;
  };

  struct Piece {
    SimTime start;
    SimTime end;
    BurstKind kind;
  };

  struct ActiveBurst {
    std::uint64_t id = 0;
    std::vector<Piece> pieces;
    std::size_t next_piece = 0;
    std::vector<PlannedSegment> segments;
    std::vector<std::uint64_t> tx_ids;
    std::size_t record = 0;  // index into trace_.laa_bursts
  };

  struct FeedbackBurst {
    std::uint64_t burst_id = 0;
    SimTime available_at;
    std::vector<laa::HarqFeedback> first_subframe;
  };

  struct Node {
    int id = -1;
    int op = 0;
    NodeKind kind = NodeKind::WifiAp;
    Technology tech = Technology::WiFi;
    double tx_power = 23.0;
    traffic::TxBuffer buffer;
    std::unique_ptr<RngStream> backoff_rng;
    std::optional<wifi::DcfEngine> dcf;
    std::optional<laa::LbtEngine> lbt;
    std::optional<EventId> period_event;
    SimTime period_start;
    bool waiting_idle = false;
    SenseInterval last_sense;
    // Wi-Fi
    WifiFrame frame;
    // LAA
    std::optional<ActiveBurst> burst;
    bool awaiting_data_start = false;
    std::vector<FeedbackBurst> feedback;
    std::uint64_t last_feedback_used = 0;
    std::int64_t drs_last_occasion = -1;
    bool drs_on_air = false;
    // RSSI sampling (clients)
    std::int64_t rssi_busy = 0;
    std::int64_t rssi_total = 0;
  };

  struct ClientInfo {
    int node = -1;
    int op = 0;
    int serving = -1;
    std::vector<std::uint64_t> voip_jobs;
  };

  // -------------------------------------------------------------------------
  // Setup

  void init_nodes() {
    laa::EdThresholdParams ed;
    ed.p_h_dbm = cfg_.lbt.p_h_dbm;
    ed.p_tx_dbm = cfg_.power.enb_dbm;
    ed.bw_mhz = cfg_.channel.bandwidth_mhz;
    ed.shared_band = cfg_.lbt.shared_band;
    ed.exclusive_threshold_dbm = cfg_.lbt.exclusive_threshold_dbm;
    laa_threshold_dbm_ = laa::ed_threshold_dbm(ed);
    mcot_us_ = laa::mcot_us(cfg_.lbt.class_params(), !cfg_.lbt.shared_band);

    nodes_.resize(topo_.nodes.size());
    la_backoff_.assign(nodes_.size() * nodes_.size(), 0.0);
    for (const auto& p : topo_.nodes) {
      Node& n = nodes_[static_cast<std::size_t>(p.node_id)];
      n.id = p.node_id;
      n.op = p.operator_id;
      n.kind = p.kind;
      n.tech = technology_of(p.kind);
      switch (p.kind) {
        case NodeKind::WifiAp:
          n.tx_power = cfg_.power.ap_dbm;
          n.dcf.emplace(cfg_.dcf);
          n.backoff_rng = std::make_unique<RngStream>(seed_, "dcf.backoff.node" + std::to_string(n.id));
          break;
        case NodeKind::WifiSta:
          n.tx_power = cfg_.power.sta_dbm;
          n.dcf.emplace(cfg_.dcf);
          n.backoff_rng = std::make_unique<RngStream>(seed_, "dcf.backoff.node" + std::to_string(n.id));
          break;
        case NodeKind::LaaEnb:
          n.tx_power = cfg_.power.enb_dbm;
          n.lbt.emplace(cfg_.lbt.class_params(), 0, cfg_.lbt.ecca_slot_us, cfg_.lbt.defer_base_us);
          n.backoff_rng = std::make_unique<RngStream>(seed_, "laa.backoff.node" + std::to_string(n.id));
          break;
        case NodeKind::LaaUe:
          n.tx_power = cfg_.power.sta_dbm;
          break;
      }
      if (!is_infrastructure(p.kind)) {
        clients_.push_back(ClientInfo{p.node_id, p.operator_id, topo_.serving[static_cast<std::size_t>(p.node_id)], {}});
      }
    }
  }

  void init_traffic() {
    const SimTime end = opt_.duration;
    for (std::size_t ci = 0; ci < clients_.size(); ++ci) {
      const ClientInfo& c = clients_[ci];
      const std::string base = "traffic.op" + std::to_string(c.op) + ".client" + std::to_string(c.node);
      if (opt_.dl_lambda_per_s > 0) {
        RngStream s(seed_, base + ".ftp_dl");
        traffic::FtpFlowConfig f{opt_.dl_lambda_per_s, cfg_.traffic.file_size_bytes};
        for (SimTime t : traffic::generate_ftp_arrivals(f, s, end))
          schedule_arrival(t, static_cast<int>(ci), traffic::FlowKind::FtpDl, f.file_size_bytes);
      }
      if (opt_.dl_lambda_per_s > 0 && cfg_.traffic.ul_fraction > 0) {
        RngStream s(seed_, base + ".ftp_ul");
        traffic::FtpFlowConfig f{opt_.dl_lambda_per_s * cfg_.traffic.ul_fraction, cfg_.traffic.file_size_bytes};
        for (SimTime t : traffic::generate_ftp_arrivals(f, s, end))
          schedule_arrival(t, static_cast<int>(ci), traffic::FlowKind::FtpUl, f.file_size_bytes);
      }
      const int rank = c.node - topo_.clients(c.op).front();
      if (cfg_.traffic.voip_enabled && rank < cfg_.traffic.voip_users_per_operator) {
        RngStream s(seed_, base + ".voip_phase");
        const auto period = SimTime::from_ms(cfg_.traffic.voip.packet_interval_ms);
        const SimTime phase{s.uniform_int(0, period.ns - 1)};
        for (SimTime t : traffic::generate_voip_packets(cfg_.traffic.voip, phase, end)) {
          schedule_arrival(t, static_cast<int>(ci), traffic::FlowKind::VoipDl, cfg_.traffic.voip.payload_bytes);
          if (cfg_.traffic.voip_uplink)
            schedule_arrival(t, static_cast<int>(ci), traffic::FlowKind::VoipUl, cfg_.traffic.voip.payload_bytes);
        }
      }
    }
  }

  void schedule_arrival(SimTime t, int client, traffic::FlowKind kind, std::int64_t bytes) {
    const ClientInfo& c = clients_[static_cast<std::size_t>(client)];
    if (!traffic::is_voip(kind)) outcomes_[static_cast<std::size_t>(c.op - 1)].ftp_arrivals.push_back(t);
    q_.schedule(t, c.node, "arrival", [this, client, kind, bytes] { on_arrival(client, kind, bytes); });
  }

  // -------------------------------------------------------------------------
  // Traffic

  void on_arrival(int client, traffic::FlowKind kind, std::int64_t bytes) {
    ClientInfo& c = clients_[static_cast<std::size_t>(client)];
    traffic::Job j;
    j.id = jobs_.size();
    j.kind = kind;
    j.client = client;
    const bool dl = traffic::is_downlink(kind);
    j.src = dl ? c.serving : c.node;
    j.dst = dl ? c.node : c.serving;
    j.bytes = bytes;
    j.queued = bytes;
    j.arrival = now();
    jobs_.push_back(j);
    if (traffic::is_voip(kind)) c.voip_jobs.push_back(j.id);

    Node& src = node(j.src);
    if (src.kind == NodeKind::LaaUe) {
      // Release-13 LAA carries no uplink on the unlicensed carrier: UL goes over the licensed PCell.
      deliver_on_licensed(jobs_.back());
      return;
    }
    src.buffer.push(jobs_.back(), now());
    if (src.dcf) wifi_kick(src);
    if (src.lbt) laa_kick(src);
  }

  void deliver_on_licensed(traffic::Job& j) {
    const double rate = cfg_.carriers.licensed_rate_mbps * 1e6;
    j.first_service = now();
    j.completion = now() + SimTime{static_cast<std::int64_t>(std::ceil(8.0 * j.bytes / rate * 1e9))};
    j.delivered = j.bytes;
    j.queued = 0;
    licensed_jobs_.push_back(j.id);
  }

  void credit(traffic::Job& j, std::int64_t bytes, SimTime at) {
    j.in_flight -= bytes;
    j.delivered += bytes;
    if (j.complete()) j.completion = std::max(j.completion.value_or(at), at);
  }

  void maybe_resolve(Node& n, traffic::Job& j) {
    if (j.resolved()) n.buffer.resolve(j.id, now());
  }

  // -------------------------------------------------------------------------
  // Shared sensing machinery

  bool busy_over(const Node& n, SimTime a, SimTime b) const {
    if (b <= a) return false;
    if (medium_->transmitting(n.id, a, b)) return true;  // e.g. its own ACK
    if (n.tech == Technology::LAA) return medium_->max_energy_dbm(n.id, a, b, n.id) >= laa_threshold_dbm_;
    if (medium_->max_energy_dbm(n.id, a, b, n.id) >= cfg_.dcf.cca_ed_dbm) return true;
    return cfg_.dcf.preamble_detect &&
           medium_->max_single_arrival_dbm(n.id, a, b, Technology::WiFi, n.id) >= cfg_.dcf.preamble_detect_dbm;
  }

  bool busy_at(const Node& n, SimTime t) const { return busy_over(n, t, t + SimTime{1}); }

  double threshold_of(const Node& n) const {
    return n.tech == Technology::LAA ? laa_threshold_dbm_ : cfg_.dcf.cca_ed_dbm;
  }

  SimTime next_period(const Node& n) const { return n.dcf ? n.dcf->next_period() : n.lbt->next_period(); }

  void begin_sensing(Node& n) {
    if (busy_at(n, now())) {
      wait_for_idle(n);
    } else {
      schedule_period(n, now());
    }
  }

  void schedule_period(Node& n, SimTime start) {
    n.period_start = start;
    SimTime fire = start + next_period(n);
    if (fire < now()) fire = now();
    const int id = n.id;
    n.period_event = q_.schedule(fire, id, "sense", [this, id] { on_period_end(node(id)); });
  }

  void wait_for_idle(Node& n) {
    n.waiting_idle = true;
    waiters_.push_back(n.id);
  }

  void cancel_sensing(Node& n) {
    if (n.period_event) q_.cancel(*n.period_event);
    n.period_event.reset();
    n.waiting_idle = false;
  }

  void on_period_end(Node& n) {
    n.period_event.reset();
    const bool idle = !busy_over(n, n.period_start, now());
    n.last_sense = SenseInterval{n.period_start, now(), threshold_of(n)};
    bool freeze = false;
    bool transmit = false;
    if (n.dcf) {
      const auto a = n.dcf->advance(idle);
      freeze = a == wifi::DcfAction::Freeze;
      transmit = a == wifi::DcfAction::TransmitNow;
    } else {
      const auto a = n.lbt->advance(idle);
      freeze = a == laa::LbtAction::Freeze;
      transmit = a == laa::LbtAction::TransmitNow;
    }
    if (transmit) {
      if (n.dcf)
        wifi_transmit(n);
      else
        laa_grant(n);
    } else if (freeze) {
      handle_freeze(n);
    } else {
      schedule_period(n, now());
    }
  }

  /// After a busy period: restart deferral from the last busy->idle
  /// transition if the medium is already idle, otherwise wait for it.
  void handle_freeze(Node& n) {
    if (n.lbt) n.lbt->restart_defer();
    if (busy_at(n, now())) {
      wait_for_idle(n);
      return;
    }
    const SimTime since = medium_->last_end_in(-1, n.period_start, now()).value_or(now());
    schedule_period(n, std::max(since, n.period_start));
  }

  void on_medium_release() {
    if (waiters_.empty()) return;
    std::vector<int> still;
    std::vector<int> woken;
    for (int id : waiters_) {
      Node& n = node(id);
      if (!n.waiting_idle) continue;
      if (busy_at(n, now())) {
        still.push_back(id);
      } else {
        n.waiting_idle = false;
        woken.push_back(id);
      }
    }
    waiters_ = std::move(still);
    for (int id : woken) {
      Node& n = node(id);
      if (n.lbt) n.lbt->restart_defer();
      schedule_period(n, now());
    }
  }

  std::uint64_t add_tx(const Node& n, SimTime start, SimTime end, BurstKind kind) {
    ActiveTransmission tx;
    tx.tx_node = n.id;
    tx.start = start;
    tx.end = end;
    tx.tx_power_dbm = n.tx_power;
    tx.kind = kind;
    tx.tech = n.tech;
    const auto id = medium_->add(tx);
    q_.schedule(end, n.id, "tx_end", [this] { on_medium_release(); });
    return id;
  }

  // -------------------------------------------------------------------------
  // Wi-Fi DCF

  bool has_queued(const Node& n) const {
    for (auto id : n.buffer.order())
      if (jobs_[id].queued > 0) return true;
    return false;
  }

  double link_rate(const Node& tx, int rx) const {
    const double snr = medium_->snr_db(tx.id, tx.tx_power, rx) - la_backoff(tx.id, rx);
    return std::max(cfg_.rate.min_rate(tx.tech), rate_bps(snr, tx.tech, cfg_.rate));
  }

  double& la_backoff(int tx, int rx) { return la_backoff_[static_cast<std::size_t>(tx) * nodes_.size() + static_cast<std::size_t>(rx)]; }
  double la_backoff(int tx, int rx) const {
    return la_backoff_[static_cast<std::size_t>(tx) * nodes_.size() + static_cast<std::size_t>(rx)];
  }

  void la_update(int tx, int rx, bool success) {
    if (!cfg_.rate.link_adaptation) return;
    double& b = la_backoff(tx, rx);
    b = success ? std::max(0.0, b - cfg_.rate.la_success_step_db)
                : std::min(cfg_.rate.la_max_backoff_db(node(tx).tech), b + cfg_.rate.la_failure_step_db);
  }

  void wifi_kick(Node& n) {
    if (n.dcf->state() != wifi::DcfState::Idle) return;
    if (!n.frame.retry && !has_queued(n)) return;
    const int c = n.dcf->start_frame(*n.backoff_rng);
    trace_.draws.push_back({n.id, c, n.dcf->cw(), false});
    trace_.dcf_cw_observed.push_back(n.dcf->cw());
    begin_sensing(n);
  }

  void wifi_transmit(Node& n) {
    WifiFrame& f = n.frame;
    if (!f.retry) {
      std::optional<std::uint64_t> pick;
      for (auto id : n.buffer.order())
        if (jobs_[id].queued > 0) {
          pick = id;
          break;
        }
      if (!pick) throw std::logic_error("wifi_transmit: nothing queued");
      traffic::Job& j = jobs_[*pick];
      f.job = j.id;
      f.dst = j.dst;
      f.rate = link_rate(n, j.dst);
      f.bytes = std::min(j.queued, wifi::max_payload_bytes(f.rate, cfg_.dcf));
      j.queued -= f.bytes;
      j.in_flight += f.bytes;
      if (!j.first_service) j.first_service = now();
    } else {
      // Retries use the adapted rate; bytes beyond one PPDU go back to the queue.
      traffic::Job& j = jobs_[f.job];
      f.rate = link_rate(n, f.dst);
      const std::int64_t fit = std::max<std::int64_t>(1, wifi::max_payload_bytes(f.rate, cfg_.dcf));
      if (f.bytes > fit) {
        j.in_flight -= f.bytes - fit;
        j.queued += f.bytes - fit;
        f.bytes = fit;
      }
    }
    const SimTime end = now() + wifi::data_airtime(f.bytes, f.rate, cfg_.dcf);
    f.tx_id = add_tx(n, now(), end, BurstKind::Data);
    f.active = true;
    trace_.wifi_tx.push_back({n.id, f.dst, now(), end, n.last_sense, f.retry, false, f.tx_id});
    f.record = trace_.wifi_tx.size() - 1;
    ++trace_.wifi_attempts;
    const int id = n.id;
    q_.schedule(end, id, "wifi_data_end", [this, id] { wifi_data_end(node(id)); });
  }

  void wifi_data_end(Node& n) {
    n.dcf->on_tx_end();
    WifiFrame& f = n.frame;
    const double th = decode_threshold_db(f.rate, Technology::WiFi, cfg_.rate);
    const bool decoded = medium_->reception_outcome(f.tx_id, f.dst, th) == Reception::Decoded;
    trace_.wifi_tx[f.record].decoded = decoded;
    const int id = n.id;
    const SimTime ack_start = now() + SimTime::from_us(cfg_.dcf.sifs_us);
    const SimTime ack_end = ack_start + SimTime::from_us(cfg_.dcf.ack_duration_us);
    if (!decoded) {
      ++trace_.wifi_collisions;
      q_.schedule(ack_end, id, "wifi_ack_timeout", [this, id] { wifi_resolve(node(id), false); });
      return;
    }
    const int dst = f.dst;
    q_.schedule(ack_start, dst, "wifi_ack_start", [this, id, dst, ack_start, ack_end] {
      Node& rx = node(dst);
      if (medium_->transmitting(rx.id, ack_start, ack_start + SimTime{1})) {
        q_.schedule(ack_end, id, "wifi_ack_timeout", [this, id] { wifi_resolve(node(id), false); });
        return;
      }
      const auto ack_id = add_tx(rx, ack_start, ack_end, BurstKind::Ack);
      q_.schedule(ack_end, id, "wifi_ack_end", [this, id, ack_id] {
        Node& tx = node(id);
        const bool ok =
            medium_->reception_outcome(ack_id, tx.id, cfg_.dcf.ack_decode_sinr_db) == Reception::Decoded;
        wifi_resolve(tx, ok);
      });
    });
  }

  void wifi_resolve(Node& n, bool acked) {
    WifiFrame& f = n.frame;
    traffic::Job& j = jobs_[f.job];
    f.active = false;
    la_update(n.id, f.dst, acked);
    switch (n.dcf->on_ack(acked)) {
      case wifi::FrameResult::Acked:
        f.retry = false;
        credit(j, f.bytes, now());
        maybe_resolve(n, j);
        break;
      case wifi::FrameResult::Retry:
        f.retry = true;
        break;
      case wifi::FrameResult::Dropped:
        f.retry = false;
        j.in_flight -= f.bytes;
        j.dropped += f.bytes;
        if (!traffic::is_voip(j.kind)) {
          j.dropped += j.queued;
          j.queued = 0;
        }
        maybe_resolve(n, j);
        break;
    }
    wifi_kick(n);
  }

  // -------------------------------------------------------------------------
  // LAA eNB

  void apply_cws_update(Node& n) {
    const FeedbackBurst* ref = nullptr;
    for (const auto& fb : n.feedback)
      if (fb.available_at <= now() && fb.burst_id > n.last_feedback_used && (!ref || fb.burst_id > ref->burst_id))
        ref = &fb;
    if (!ref) return;
    n.lbt->update_cws(ref->first_subframe);
    n.last_feedback_used = ref->burst_id;
    const auto used = ref->burst_id;
    std::erase_if(n.feedback, [used](const FeedbackBurst& fb) { return fb.burst_id <= used; });
  }

  void laa_kick(Node& n) {
    if (n.lbt->state() != laa::LbtState::Idle || n.burst || n.drs_on_air) return;
    if (!has_queued(n)) return;
    apply_cws_update(n);
    trace_.cws_observed.push_back(n.lbt->cws());
    const int c = n.lbt->start_access(*n.backoff_rng);
    trace_.draws.push_back({n.id, c, n.lbt->cws(), true});
    begin_sensing(n);
  }

  void laa_grant(Node& n) {
    const SimTime grant = now();
    const SimTime data_start{(grant.ns + laa::kSlotNs - 1) / laa::kSlotNs * laa::kSlotNs};
    if (!cfg_.lbt.reservation_signal && data_start > grant) {
      // Without a reservation signal the eNB stays silent until the slot
      // boundary and re-checks the channel for a single 25 us interval.
      n.awaiting_data_start = true;
      const int id = n.id;
      q_.schedule(data_start, id, "laa_slot_boundary", [this, id, grant] {
        Node& e = node(id);
        e.awaiting_data_start = false;
        const SimTime from = now() - SimTime::from_us(laa::kDrsIdleObservationUs);
        if (busy_over(e, from, now())) {
          e.lbt->abandon_grant();
          e.period_start = from;
          handle_freeze(e);
          return;
        }
        e.last_sense = SenseInterval{from, now(), laa_threshold_dbm_};
        start_burst(e, grant, now());
      });
      return;
    }
    start_burst(n, grant, grant);
  }

  /// Builds, allocates and launches a burst. `tx_start` is when energy goes
  /// on air (grant with reservation signal, otherwise the slot boundary).
  void start_burst(Node& n, SimTime grant, SimTime tx_start) {
    const SimTime data_start{(tx_start.ns + laa::kSlotNs - 1) / laa::kSlotNs * laa::kSlotNs};
    const std::int64_t reservation_us = (data_start - tx_start).ns / 1000;
    auto plan = laa::partial_subframe_plan(data_start, mcot_us_ - reservation_us - 1);
    plan.grant = grant;

    ActiveBurst b;
    b.id = ++burst_counter_;
    allocate(n, plan, b);
    if (b.segments.empty()) {
      // Nothing to send (all data in flight); release the grant.
      n.lbt->finish_burst();
      return;
    }

    // Timeline in airtime offsets from tx_start, then Japan gaps.
    std::vector<Piece> raw;
    if (data_start > tx_start) raw.push_back({tx_start, data_start, BurstKind::Reservation});
    raw.push_back({data_start, b.segments.back().seg.end(), BurstKind::Data});
    const SimTime gap = SimTime::from_us(laa::kJapanGapUs);
    const SimTime every = SimTime::from_us(laa::kJapanGapEveryUs);
    auto shift_of = [&](SimTime t, bool is_end) {
      if (!cfg_.lbt.japan_mode) return SimTime{};
      const std::int64_t off = (t - tx_start).ns;
      std::int64_t k = off / every.ns;
      if (is_end && off % every.ns == 0 && k > 0) --k;
      return SimTime{k * gap.ns};
    };
    const SimTime burst_end = b.segments.back().seg.end();
    for (const auto& p : raw) {
      SimTime a = p.start;
      while (a < p.end) {
        SimTime cut = p.end;
        if (cfg_.lbt.japan_mode) {
          const std::int64_t off = (a - tx_start).ns;
          const SimTime next_boundary = tx_start + SimTime{(off / every.ns + 1) * every.ns};
          // A boundary gap is only inserted if the burst continues past it.
          if (next_boundary < p.end) cut = next_boundary;
        }
        b.pieces.push_back({a + shift_of(a, false), cut + shift_of(cut, true), p.kind});
        a = cut;
      }
    }
    for (auto& s : b.segments) {
      SimTime a = s.seg.start;
      const SimTime e = s.seg.end();
      while (a < e) {
        SimTime cut = e;
        if (cfg_.lbt.japan_mode) {
          const std::int64_t off = (a - tx_start).ns;
          const SimTime nb = tx_start + SimTime{(off / every.ns + 1) * every.ns};
          if (nb < e && nb < burst_end) cut = nb;
        }
        s.intervals.push_back({a + shift_of(a, false), cut + shift_of(cut, true)});
        a = cut;
      }
    }

    LaaBurstRecord rec;
    rec.burst_id = b.id;
    rec.node = n.id;
    rec.grant = grant;
    rec.final_sense = n.last_sense;
    rec.tx_start = tx_start;
    rec.data_start = data_start;
    rec.mcot_us = mcot_us_;
    rec.cws_at_access = n.lbt->cws();
    trace_.laa_bursts.push_back(rec);
    b.record = trace_.laa_bursts.size() - 1;
    n.burst = std::move(b);
    launch_piece(n);
  }

  /// Splits the eNB's queued bytes across plan segments. The final segment
  /// is shortened to the smallest allowed ending that carries the remainder.
  void allocate(Node& n, laa::BurstPlan& plan, ActiveBurst& b) {
    struct UeDemand {
      int ue;
      double rate;
      std::vector<std::uint64_t> jobs;
      std::int64_t remaining = 0;
    };
    std::vector<UeDemand> ues;
    for (auto id : n.buffer.order()) {
      const traffic::Job& j = jobs_[id];
      if (j.queued <= 0) continue;
      auto it = std::find_if(ues.begin(), ues.end(), [&](const UeDemand& u) { return u.ue == j.dst; });
      if (it == ues.end()) {
        ues.push_back({j.dst, link_rate(n, j.dst), {}, 0});
        it = ues.end() - 1;
      }
      it->jobs.push_back(id);
      it->remaining += j.queued;
    }
    // Resources are symbols of the full carrier; a UE with little data frees
    // its unused share for the others (water-filling).
    const double symbol_s = 1e-3 / laa::kSymbolsPerSubframe;
    auto bytes_per_symbol = [&](const UeDemand& u) { return u.rate * symbol_s / 8.0; };
    for (std::size_t k = 0; k < plan.segments.size(); ++k) {
      std::vector<UeDemand*> active;
      for (auto& u : ues)
        if (u.remaining > 0) active.push_back(&u);
      if (active.empty()) {
        plan.segments.resize(k);
        break;
      }
      double total_need = 0;
      for (auto* u : active) total_need += static_cast<double>(u->remaining) / bytes_per_symbol(*u);
      const int need = static_cast<int>(std::ceil(total_need - 1e-9));
      if (need <= plan.segments[k].symbol_count || k + 1 == plan.segments.size()) {
        if (need < plan.segments[k].symbol_count || !laa::is_valid_ending(plan.segments[k].symbol_count))
          laa::truncate_plan(plan, k, need);
        else
          plan.segments.resize(k + 1);
        if (k >= plan.segments.size()) break;
      }
      PlannedSegment ps;
      ps.seg = plan.segments[k];
      std::stable_sort(active.begin(), active.end(), [&](const UeDemand* x, const UeDemand* y) {
        return static_cast<double>(x->remaining) / bytes_per_symbol(*x) <
               static_cast<double>(y->remaining) / bytes_per_symbol(*y);
      });
      double free_symbols = ps.seg.symbol_count;
      for (std::size_t i = 0; i < active.size(); ++i) {
        UeDemand* u = active[i];
        const double fair = free_symbols / static_cast<double>(active.size() - i);
        const double given = std::min(fair, static_cast<double>(u->remaining) / bytes_per_symbol(*u));
        free_symbols -= given;
        std::int64_t cap = static_cast<std::int64_t>(std::ceil(given * bytes_per_symbol(*u) - 1e-6));
        SegmentAlloc a;
        a.ue = u->ue;
        a.rate = u->rate;
        for (auto jid : u->jobs) {
          if (cap <= 0) break;
          traffic::Job& j = jobs_[jid];
          const std::int64_t take = std::min(j.queued, cap);
          if (take <= 0) continue;
          j.queued -= take;
          j.in_flight += take;
          if (!j.first_service) j.first_service = ps.seg.start;
          cap -= take;
          u->remaining -= take;
          a.chunks.push_back({jid, take});
        }
        if (!a.chunks.empty()) ps.allocs.push_back(std::move(a));
      }
      b.segments.push_back(std::move(ps));
    }
  }

  void launch_piece(Node& n) {
    ActiveBurst& b = *n.burst;
    const Piece& p = b.pieces[b.next_piece];
    b.tx_ids.push_back(add_tx(n, p.start, p.end, p.kind));
    auto& rec = trace_.laa_bursts[b.record];
    rec.airtime += p.end - p.start;
    rec.end = p.end;
    const int id = n.id;
    q_.schedule(p.end, id, "laa_piece_end", [this, id] { laa_piece_end(node(id)); });
  }

  void laa_piece_end(Node& n) {
    ActiveBurst& b = *n.burst;
    const Piece& done = b.pieces[b.next_piece];
    ++b.next_piece;
    if (b.next_piece == b.pieces.size()) {
      finish_burst(n, false);
      return;
    }
    const Piece& next = b.pieces[b.next_piece];
    if (next.start == done.end) {
      launch_piece(n);
      return;
    }
    // Japan sensing gap before continuing.
    n.lbt->begin_gap();
    const int id = n.id;
    const SimTime gap_from = done.end;
    q_.schedule(next.start, id, "laa_gap_end", [this, id, gap_from] {
      Node& e = node(id);
      const bool idle = !busy_over(e, gap_from, now());
      trace_.laa_bursts[e.burst->record].gaps.push_back({gap_from, now(), idle});
      e.lbt->end_gap(idle);
      if (idle) {
        launch_piece(e);
      } else {
        finish_burst(e, true);
      }
    });
  }

  void finish_burst(Node& n, bool aborted) {
    ActiveBurst b = std::move(*n.burst);
    n.burst.reset();
    if (!aborted) n.lbt->finish_burst();
    auto& rec = trace_.laa_bursts[b.record];
    rec.aborted = aborted;
    const SimTime on_air_until = rec.end;

    FeedbackBurst fb;
    fb.burst_id = b.id;
    bool first = true;
    for (auto& s : b.segments) {
      const bool sent = !s.intervals.empty() && s.intervals.back().second <= on_air_until;
      if (sent) rec.segment_symbols.push_back(s.seg.symbol_count);
      const SimTime seg_end = s.intervals.empty() ? s.seg.end() : s.intervals.back().second;
      for (auto& a : s.allocs) {
        laa::HarqValue v = laa::HarqValue::Nack;
        if (sent) {
          v = harq_outcome(b, s, a);
          la_update(n.id, a.ue, v == laa::HarqValue::Ack);
          ++trace_.harq_counts[static_cast<std::size_t>(v)];
        }
        if (sent && first) {
          laa::HarqFeedback h;
          h.burst_id = b.id;
          h.subframe_index = 0;
          h.value = v;
          h.scheduled_on_pcell = cfg_.carriers.cross_carrier_scheduling;
          h.actually_scheduled = true;
          fb.first_subframe.push_back(h);
        }
        for (auto [jid, bytes] : a.chunks) {
          traffic::Job& j = jobs_[jid];
          if (sent && v == laa::HarqValue::Ack) {
            credit(j, bytes, seg_end);
            maybe_resolve(n, j);
          } else {
            schedule_requeue(n, jid, bytes, sent ? seg_end + feedback_delay() : now());
          }
        }
      }
      if (sent) first = false;
    }
    if (!fb.first_subframe.empty()) {
      fb.available_at = (b.segments.front().intervals.back().second) + feedback_delay();
      n.feedback.push_back(std::move(fb));
    }
    laa_kick(n);
  }

  laa::HarqValue harq_outcome(const ActiveBurst& b, const PlannedSegment& s, const SegmentAlloc& a) const {
    auto tx_for = [&](SimTime t) -> std::uint64_t {
      for (auto id : b.tx_ids) {
        const ActiveTransmission* tx = medium_->find(id);
        if (tx && tx->start <= t && t < tx->end) return id;
      }
      throw std::logic_error("harq_outcome: no burst transmission covers segment");
    };
    if (!cfg_.carriers.cross_carrier_scheduling) {
      const SimTime c0 = s.intervals.front().first;
      const SimTime c1 = std::min(s.intervals.front().second, c0 + SimTime{laa::symbol_offset_ns(1)});
      if (medium_->min_sinr_db(a.ue, tx_for(c0), c0, c1) < cfg_.lbt.control_decode_sinr_db) return laa::HarqValue::Dtx;
    }
    const double th = decode_threshold_db(a.rate, Technology::LAA, cfg_.rate);
    for (const auto& [from, to] : s.intervals)
      if (medium_->min_sinr_db(a.ue, tx_for(from), from, to) < th) return laa::HarqValue::Nack;
    return laa::HarqValue::Ack;
  }

  SimTime feedback_delay() const { return SimTime::from_ms(cfg_.lbt.feedback_delay_subframes); }

  void schedule_requeue(Node& n, std::uint64_t jid, std::int64_t bytes, SimTime at) {
    const int id = n.id;
    q_.schedule(std::max(at, now()), id, "laa_requeue", [this, id, jid, bytes] {
      traffic::Job& j = jobs_[jid];
      j.in_flight -= bytes;
      j.queued += bytes;
      laa_kick(node(id));
    });
  }

  // -------------------------------------------------------------------------
  // Discovery signal

  void schedule_drs_occasion(int id, std::int64_t occasion) {
    const SimTime start = laa::dmtc_occasion_start(occasion, cfg_.lbt.drs);
    if (start >= opt_.duration) return;
    q_.schedule(start, id, "drs_attempt", [this, id, occasion, start] { drs_attempt(node(id), occasion, start); });
  }

  void drs_attempt(Node& n, std::int64_t occasion, SimTime window_start) {
    const auto& dcfg = cfg_.lbt.drs;
    const SimTime window_end = window_start + SimTime::from_ms(dcfg.dmtc_window_ms);
    auto next_occasion = [&] { schedule_drs_occasion(n.id, occasion + 1); };
    if (n.drs_last_occasion == occasion) return next_occasion();
    const auto st = n.lbt->state();
    if (n.burst || n.awaiting_data_start || st == laa::LbtState::TxOngoing || st == laa::LbtState::GapSensing) {
      // Discovery signals ride inside the ongoing data burst.
      n.drs_last_occasion = occasion;
      ++trace_.drs_with_burst;
      return next_occasion();
    }
    const SimTime from = std::max(SimTime{}, now() - SimTime::from_us(laa::kDrsIdleObservationUs));
    const bool idle = !busy_over(n, from, now());
    const SimTime idle_since = idle ? from : now();
    if (laa::drs_permitted(now(), dcfg, idle_since)) {
      const bool was_sensing = st == laa::LbtState::Deferring || st == laa::LbtState::Backoff;
      if (was_sensing) {
        cancel_sensing(n);
        n.lbt->interrupt();
      }
      const SimTime end = now() + dcfg.drs_duration();
      add_tx(n, now(), end, BurstKind::Drs);
      trace_.drs.push_back({n.id, now(), end, from, now(), occasion});
      n.drs_last_occasion = occasion;
      n.drs_on_air = true;
      const int id = n.id;
      q_.schedule(end, id, "drs_end", [this, id, was_sensing] {
        Node& e = node(id);
        e.drs_on_air = false;
        if (was_sensing)
          begin_sensing(e);
        else
          laa_kick(e);
      });
      return next_occasion();
    }
    const SimTime retry = now() + SimTime::from_ms(1);
    if (retry < window_end && retry < opt_.duration) {
      const int id = n.id;
      q_.schedule(retry, id, "drs_attempt",
                  [this, id, occasion, window_start] { drs_attempt(node(id), occasion, window_start); });
    } else {
      next_occasion();
    }
  }

  // -------------------------------------------------------------------------
  // Periodic housekeeping: pruning, RSSI sampling, licensed offload

  void schedule_tick(SimTime at) {
    if (at > opt_.duration) return;
    q_.schedule(at, -1, "tick", [this] { on_tick(); });
  }

  void on_tick() {
    const SimTime t = now();
    const SimTime from = t - SimTime::from_ms(1);
    if (cfg_.metrics.rssi_enabled) {
      for (const auto& c : clients_) {
        Node& n = node(c.node);
        for (int k = 0; k < metrics::kL1SamplesPerMs; ++k) {
          const SimTime a = from + SimTime{laa::symbol_offset_ns(k)};
          const SimTime b = from + SimTime{laa::symbol_offset_ns(k + 1)};
          if (medium_->mean_energy_dbm(n.id, a, b, n.id) > cfg_.metrics.occupancy_threshold_dbm) ++n.rssi_busy;
          ++n.rssi_total;
        }
      }
    }
    if (cfg_.carriers.laa_data_on_licensed) serve_licensed();
    medium_->prune_before(t - SimTime::from_ms(25));
    schedule_tick(t + SimTime::from_ms(1));
  }

  void serve_licensed() {
    const std::int64_t budget0 =
        static_cast<std::int64_t>(cfg_.carriers.licensed_rate_mbps * 1e6 * 1e-3 / 8.0);
    for (auto& n : nodes_) {
      if (n.kind != NodeKind::LaaEnb) continue;
      std::int64_t budget = budget0;
      for (auto id : n.buffer.order()) {
        if (budget <= 0) break;
        traffic::Job& j = jobs_[id];
        const std::int64_t take = std::min(j.queued, budget);
        if (take <= 0) continue;
        if (!j.first_service) j.first_service = now() - SimTime::from_ms(1);
        j.queued -= take;
        j.in_flight += take;
        credit(j, take, now());
        budget -= take;
        maybe_resolve(n, j);
      }
    }
  }

  // -------------------------------------------------------------------------
  // Results

  void finalize() {
    const SimTime horizon = opt_.duration;
    for (int op = 1; op <= 2; ++op) {
      OperatorOutcome& o = outcomes_[static_cast<std::size_t>(op - 1)];
      o.operator_id = op;
      o.technology = techs_[static_cast<std::size_t>(op - 1)];
      double occ_sum = 0;
      int infra = 0;
      for (const auto& n : nodes_) {
        if (n.op != op || !is_infrastructure(n.kind)) continue;
        const double occ = traffic::buffer_occupancy(n.buffer.busy_log(), horizon);
        o.ap_occupancy.push_back(occ);
        occ_sum += occ;
        ++infra;
      }
      o.mean_occupancy = infra ? occ_sum / infra : 0.0;
      std::int64_t busy = 0;
      std::int64_t total = 0;
      for (const auto& c : clients_) {
        if (c.op != op) continue;
        busy += node(c.node).rssi_busy;
        total += node(c.node).rssi_total;
      }
      if (total > 0) o.channel_occupancy_pct = 100.0 * static_cast<double>(busy) / static_cast<double>(total);
    }
    const double budget_ms = static_cast<double>(cfg_.traffic.voip.delay_budget_ms);
    std::vector<std::map<int, std::vector<double>>> voip(2);
    for (const auto& j : jobs_) {
      const ClientInfo& c = clients_[static_cast<std::size_t>(j.client)];
      OperatorOutcome& o = outcomes_[static_cast<std::size_t>(c.op - 1)];
      if (traffic::is_voip(j.kind)) {
        double d;
        if (j.complete())
          d = (*j.completion - j.arrival).ms();
        else if (j.dropped > 0)
          d = metrics::kDroppedDelay;
        else if ((horizon - j.arrival).ms() > budget_ms)
          d = (horizon - j.arrival).ms();
        else
          continue;  // still within budget at the horizon
        voip[static_cast<std::size_t>(c.op - 1)][j.client].push_back(d);
        continue;
      }
      const bool licensed = node(j.src).kind == NodeKind::LaaUe;
      if (j.complete() && !licensed) {
        o.files.push_back(metrics::FileRecord{j.bytes, j.arrival, *j.first_service, *j.completion});
      } else if (j.dropped > 0) {
        ++o.files_dropped;
      } else if (!j.complete()) {
        ++o.files_incomplete;
      }
    }
    for (std::size_t op = 0; op < 2; ++op)
      for (auto& [client, delays] : voip[op]) outcomes_[op].voip_delays_ms.push_back(std::move(delays));
  }

  // -------------------------------------------------------------------------

  void observe(const DispatchRecord& r) {
    ++dispatched_;
    auto mix = [this](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        digest_ ^= (v >> (8 * i)) & 0xff;
        digest_ *= 0x100000001b3ULL;
      }
    };
    mix(static_cast<std::uint64_t>(r.fire_at.ns));
    mix(r.seq);
    mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(r.target)));
    digest_ = detail::fnv1a(r.kind, digest_);
    if (opt_.event_log && logged_ < opt_.event_log_limit) {
      *opt_.event_log << r.fire_at.ns << ' ' << r.seq << ' ' << r.target << ' ' << r.kind << '\n';
      ++logged_;
    }
  }

  SimTime now() const { return q_.now(); }
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  ScenarioConfig cfg_;
  std::uint64_t seed_;
  SimOptions opt_;
  std::array<Technology, 2> techs_;
  Topology topo_;
  std::unique_ptr<Medium> medium_;
  EventQueue q_;
  std::vector<Node> nodes_;
  std::vector<ClientInfo> clients_;
  std::vector<traffic::Job> jobs_;
  std::vector<std::uint64_t> licensed_jobs_;
  std::vector<int> waiters_;
  std::vector<double> la_backoff_;  // dB, row-major [tx][rx]
  double laa_threshold_dbm_ = -72.0;
  std::int64_t mcot_us_ = 8000;
  std::uint64_t burst_counter_ = 0;
  SimTrace trace_;
  std::array<OperatorOutcome, 2> outcomes_;
  std::uint64_t digest_ = 0xcbf29ce484222325ULL;
  std::uint64_t dispatched_ = 0;
  std::size_t logged_ = 0;
  bool ran_ = false;
};

}  // namespace coexist
