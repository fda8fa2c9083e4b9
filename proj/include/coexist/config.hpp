// Scenario configuration: JSON schema (versioned, units in key names) and
// the in-memory ScenarioConfig.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coexist/laa_mac.hpp"
#include "coexist/medium.hpp"
#include "coexist/traffic.hpp"
#include "coexist/wifi_mac.hpp"

namespace coexist {

inline constexpr int kSchemaVersion = 1;

struct BuildingConfig {
  double length_m = 120.0;
  double width_m = 50.0;
};

struct TopologyConfig {
  int nodes_per_operator = 4;
  int clients_per_operator = 10;
  double op2_offset_min_m = -15.0;
  double op2_offset_max_m = 15.0;
};

struct PowerConfig {
  double ap_dbm = 23.0;
  double enb_dbm = 23.0;
  double sta_dbm = 18.0;
};

struct CarrierConfig {
  bool licensed_anchor = true;       // F1/F2 licensed PCell for the LAA operator
  bool laa_data_on_licensed = false; // sensitivity switch: licensed carrier also carries DL data
  double licensed_rate_mbps = 50.0;
  bool cross_carrier_scheduling = false;  // DL grants sent on the PCell
};

struct LbtConfig {
  int priority_class = 3;
  std::vector<laa::PriorityClassParams> class_overrides;
  std::int64_t ecca_slot_us = 9;
  std::int64_t defer_base_us = 16;
  double p_h_dbm = 23.0;
  bool shared_band = true;
  std::optional<double> exclusive_threshold_dbm;
  bool reservation_signal = true;
  bool japan_mode = false;
  int feedback_delay_subframes = 4;
  double control_decode_sinr_db = -2.0;
  bool drs_enabled = true;
  laa::DrsConfig drs;

  laa::PriorityClassParams class_params() const {
    for (const auto& c : class_overrides)
      if (c.class_id == priority_class) return c;
    return laa::default_priority_class(priority_class);
  }
};

struct TrafficConfig {
  std::int64_t file_size_bytes = 500000;
  double dl_arrival_rate_per_s = 1.0;  // per client, used when no load class is requested
  double ul_fraction = 0.0;            // UL FTP rate as a fraction of the DL rate
  bool voip_enabled = false;
  bool voip_uplink = true;
  int voip_users_per_operator = 5;  // the first N clients of each operator carry a VoIP call
  traffic::VoipFlowConfig voip;
  std::map<std::string, double> load_lambda_per_s;  // pre-calibrated rates by class
};

struct MetricsConfig {
  double occupancy_threshold_dbm = -72.0;
  bool rssi_enabled = true;
  double voip_max_late_fraction = 0.02;
};

struct RunConfig {
  std::uint64_t master_seed = 1;
  int replications = 20;
  double duration_s = 10.0;
  int calibration_replications = 10;
  double calibration_duration_s = 10.0;
};

struct ScenarioConfig {
  int schema_version = kSchemaVersion;
  std::string scenario_kind = "indoor";
  BuildingConfig building;
  TopologyConfig topology;
  PowerConfig power;
  CarrierConfig carriers;
  ChannelModel channel;
  RateModel rate;
  wifi::DcfParams dcf;
  LbtConfig lbt;
  TrafficConfig traffic;
  MetricsConfig metrics;
  RunConfig run;

  void validate() const {
    if (schema_version != kSchemaVersion)
      throw std::invalid_argument("unsupported schema_version " + std::to_string(schema_version));
    if (scenario_kind != "indoor") throw std::invalid_argument("only scenario_kind \"indoor\" is supported");
    if (!(building.length_m > 0 && building.width_m > 0)) throw std::invalid_argument("building dimensions must be positive");
    if (topology.nodes_per_operator < 1 || topology.clients_per_operator < 1)
      throw std::invalid_argument("need at least one node and one client per operator");
    if (topology.op2_offset_min_m > topology.op2_offset_max_m)
      throw std::invalid_argument("op2 offset band is inverted");
    channel.validate();
    if (rate.bandwidth_mhz != channel.bandwidth_mhz)
      throw std::invalid_argument("rate bandwidth must match channel bandwidth");
    if (!(rate.efficiency_laa > 0 && rate.efficiency_wifi > 0 && rate.cap_laa_bps > 0 && rate.cap_wifi_bps > 0))
      throw std::invalid_argument("rate model parameters must be positive");
    if (rate.la_failure_step_db < 0 || rate.la_success_step_db < 0 || rate.la_max_backoff_laa_db < 0 ||
        rate.la_max_backoff_wifi_db < 0 || rate.min_rate_laa_bps <= 0 || rate.min_rate_wifi_bps <= 0)
      throw std::invalid_argument("link adaptation steps must be non-negative");
    dcf.validate();
    lbt.class_params().validate();
    for (const auto& c : lbt.class_overrides) c.validate();
    if (lbt.feedback_delay_subframes < 0) throw std::invalid_argument("feedback delay must be non-negative");
    if (lbt.drs_enabled) lbt.drs.validate();
    if (!carriers.licensed_anchor)
      throw std::invalid_argument("LAA requires a licensed anchor carrier (carriers.licensed_anchor)");
    if (traffic.file_size_bytes <= 0) throw std::invalid_argument("file size must be positive");
    if (traffic.dl_arrival_rate_per_s < 0 || traffic.ul_fraction < 0)
      throw std::invalid_argument("arrival rates must be non-negative");
    if (traffic.voip_enabled) traffic.voip.validate();
    if (traffic.voip_users_per_operator < 0 || traffic.voip_users_per_operator > topology.clients_per_operator)
      throw std::invalid_argument("voip users per operator must be within 0..clients_per_operator");
    if (run.replications < 1 || run.calibration_replications < 1) throw std::invalid_argument("replications must be >= 1");
    if (!(run.duration_s > 0 && run.calibration_duration_s > 0)) throw std::invalid_argument("duration must be positive");
  }
};

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {
using nlohmann::json;

template <class T>
void get_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument("config: '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw std::invalid_argument("config: unknown key '" + where + "." + it.key() + "'");
  }
}
}  // namespace detail

inline ScenarioConfig config_from_json(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::get_opt;
  ScenarioConfig c;
  check_keys(j, {"schema_version", "scenario_kind", "building", "topology", "power", "carriers", "channel", "rate",
                 "dcf", "lbt", "traffic", "metrics", "run"},
             "");
  if (!j.contains("schema_version")) throw std::invalid_argument("config: missing schema_version");
  c.schema_version = j.at("schema_version").get<int>();
  get_opt(j, "scenario_kind", c.scenario_kind);
  if (j.contains("building")) {
    const auto& b = j.at("building");
    check_keys(b, {"length_m", "width_m"}, "building");
    get_opt(b, "length_m", c.building.length_m);
    get_opt(b, "width_m", c.building.width_m);
  }
  if (j.contains("topology")) {
    const auto& t = j.at("topology");
    check_keys(t, {"nodes_per_operator", "clients_per_operator", "op2_offset_min_m", "op2_offset_max_m"}, "topology");
    get_opt(t, "nodes_per_operator", c.topology.nodes_per_operator);
    get_opt(t, "clients_per_operator", c.topology.clients_per_operator);
    get_opt(t, "op2_offset_min_m", c.topology.op2_offset_min_m);
    get_opt(t, "op2_offset_max_m", c.topology.op2_offset_max_m);
  }
  if (j.contains("power")) {
    const auto& p = j.at("power");
    check_keys(p, {"ap_dbm", "enb_dbm", "sta_dbm"}, "power");
    get_opt(p, "ap_dbm", c.power.ap_dbm);
    get_opt(p, "enb_dbm", c.power.enb_dbm);
    get_opt(p, "sta_dbm", c.power.sta_dbm);
  }
  if (j.contains("carriers")) {
    const auto& p = j.at("carriers");
    check_keys(p, {"licensed_anchor", "laa_data_on_licensed", "licensed_rate_mbps", "cross_carrier_scheduling"},
               "carriers");
    get_opt(p, "licensed_anchor", c.carriers.licensed_anchor);
    get_opt(p, "laa_data_on_licensed", c.carriers.laa_data_on_licensed);
    get_opt(p, "licensed_rate_mbps", c.carriers.licensed_rate_mbps);
    get_opt(p, "cross_carrier_scheduling", c.carriers.cross_carrier_scheduling);
  }
  if (j.contains("channel")) {
    const auto& p = j.at("channel");
    check_keys(p, {"pathloss_exponent", "reference_loss_db", "wall_loss_db", "shadowing_sigma_db", "noise_figure_db",
                   "bandwidth_mhz", "min_distance_m"},
               "channel");
    get_opt(p, "pathloss_exponent", c.channel.pathloss_exponent);
    get_opt(p, "reference_loss_db", c.channel.reference_loss_db);
    get_opt(p, "wall_loss_db", c.channel.wall_loss_db);
    get_opt(p, "shadowing_sigma_db", c.channel.shadowing_sigma_db);
    get_opt(p, "noise_figure_db", c.channel.noise_figure_db);
    get_opt(p, "bandwidth_mhz", c.channel.bandwidth_mhz);
    get_opt(p, "min_distance_m", c.channel.min_distance_m);
  }
  c.rate.bandwidth_mhz = c.channel.bandwidth_mhz;
  if (j.contains("rate")) {
    const auto& p = j.at("rate");
    check_keys(p, {"efficiency_laa", "efficiency_wifi", "cap_laa_mbps", "cap_wifi_mbps", "decode_margin_db",
                   "link_adaptation", "la_failure_step_db", "la_success_step_db", "la_max_backoff_laa_db",
                   "la_max_backoff_wifi_db", "min_rate_laa_mbps", "min_rate_wifi_mbps"},
               "rate");
    get_opt(p, "efficiency_laa", c.rate.efficiency_laa);
    get_opt(p, "efficiency_wifi", c.rate.efficiency_wifi);
    if (p.contains("cap_laa_mbps")) c.rate.cap_laa_bps = p.at("cap_laa_mbps").get<double>() * 1e6;
    if (p.contains("cap_wifi_mbps")) c.rate.cap_wifi_bps = p.at("cap_wifi_mbps").get<double>() * 1e6;
    get_opt(p, "decode_margin_db", c.rate.decode_margin_db);
    get_opt(p, "link_adaptation", c.rate.link_adaptation);
    get_opt(p, "la_failure_step_db", c.rate.la_failure_step_db);
    get_opt(p, "la_success_step_db", c.rate.la_success_step_db);
    get_opt(p, "la_max_backoff_laa_db", c.rate.la_max_backoff_laa_db);
    get_opt(p, "la_max_backoff_wifi_db", c.rate.la_max_backoff_wifi_db);
    if (p.contains("min_rate_laa_mbps")) c.rate.min_rate_laa_bps = p.at("min_rate_laa_mbps").get<double>() * 1e6;
    if (p.contains("min_rate_wifi_mbps")) c.rate.min_rate_wifi_bps = p.at("min_rate_wifi_mbps").get<double>() * 1e6;
  }
  if (j.contains("dcf")) {
    const auto& p = j.at("dcf");
    check_keys(p, {"slot_us", "sifs_us", "difs_us", "cw_min", "cw_max", "ack_duration_us", "max_ppdu_us",
                   "phy_header_us", "retry_limit", "cca_ed_dbm", "preamble_detect", "preamble_detect_dbm",
                   "ack_decode_sinr_db"},
               "dcf");
    get_opt(p, "slot_us", c.dcf.slot_us);
    get_opt(p, "sifs_us", c.dcf.sifs_us);
    get_opt(p, "difs_us", c.dcf.difs_us);
    get_opt(p, "cw_min", c.dcf.cw_min);
    get_opt(p, "cw_max", c.dcf.cw_max);
    get_opt(p, "ack_duration_us", c.dcf.ack_duration_us);
    get_opt(p, "max_ppdu_us", c.dcf.max_ppdu_us);
    get_opt(p, "phy_header_us", c.dcf.phy_header_us);
    get_opt(p, "retry_limit", c.dcf.retry_limit);
    get_opt(p, "cca_ed_dbm", c.dcf.cca_ed_dbm);
    get_opt(p, "preamble_detect", c.dcf.preamble_detect);
    get_opt(p, "preamble_detect_dbm", c.dcf.preamble_detect_dbm);
    get_opt(p, "ack_decode_sinr_db", c.dcf.ack_decode_sinr_db);
  }
  if (j.contains("lbt")) {
    const auto& p = j.at("lbt");
    check_keys(p, {"priority_class", "classes", "ecca_slot_us", "defer_base_us", "p_h_dbm", "shared_band",
                   "exclusive_threshold_dbm", "reservation_signal", "japan_mode", "feedback_delay_subframes",
                   "control_decode_sinr_db", "drs"},
               "lbt");
    get_opt(p, "priority_class", c.lbt.priority_class);
    if (p.contains("classes")) {
      for (const auto& k : p.at("classes")) {
        check_keys(k, {"class_id", "cws_set", "mcot_shared_us", "mcot_exclusive_us", "defer_slots"}, "lbt.classes[]");
        laa::PriorityClassParams pc;
        pc.class_id = k.at("class_id").get<int>();
        pc.cws_set = k.at("cws_set").get<std::vector<int>>();
        pc.mcot_shared_us = k.at("mcot_shared_us").get<std::int64_t>();
        pc.mcot_exclusive_us = k.at("mcot_exclusive_us").get<std::int64_t>();
        pc.defer_slots = k.at("defer_slots").get<int>();
        c.lbt.class_overrides.push_back(pc);
      }
    }
    get_opt(p, "ecca_slot_us", c.lbt.ecca_slot_us);
    get_opt(p, "defer_base_us", c.lbt.defer_base_us);
    get_opt(p, "p_h_dbm", c.lbt.p_h_dbm);
    get_opt(p, "shared_band", c.lbt.shared_band);
    if (p.contains("exclusive_threshold_dbm")) c.lbt.exclusive_threshold_dbm = p.at("exclusive_threshold_dbm").get<double>();
    get_opt(p, "reservation_signal", c.lbt.reservation_signal);
    get_opt(p, "japan_mode", c.lbt.japan_mode);
    get_opt(p, "feedback_delay_subframes", c.lbt.feedback_delay_subframes);
    get_opt(p, "control_decode_sinr_db", c.lbt.control_decode_sinr_db);
    if (p.contains("drs")) {
      const auto& d = p.at("drs");
      check_keys(d, {"enabled", "dmtc_period_ms", "dmtc_offset_ms", "dmtc_window_ms", "drs_symbols"}, "lbt.drs");
      get_opt(d, "enabled", c.lbt.drs_enabled);
      get_opt(d, "dmtc_period_ms", c.lbt.drs.dmtc_period_ms);
      get_opt(d, "dmtc_offset_ms", c.lbt.drs.dmtc_offset_ms);
      get_opt(d, "dmtc_window_ms", c.lbt.drs.dmtc_window_ms);
      get_opt(d, "drs_symbols", c.lbt.drs.drs_symbols);
    }
  }
  if (j.contains("traffic")) {
    const auto& p = j.at("traffic");
    check_keys(p, {"file_size_bytes", "dl_arrival_rate_per_s", "ul_fraction", "voip", "load_lambda_per_s"}, "traffic");
    get_opt(p, "file_size_bytes", c.traffic.file_size_bytes);
    get_opt(p, "dl_arrival_rate_per_s", c.traffic.dl_arrival_rate_per_s);
    get_opt(p, "ul_fraction", c.traffic.ul_fraction);
    if (p.contains("voip")) {
      const auto& v = p.at("voip");
      check_keys(v, {"enabled", "uplink", "packet_interval_ms", "payload_bytes", "delay_budget_ms",
                     "users_per_operator"},
                 "traffic.voip");
      get_opt(v, "enabled", c.traffic.voip_enabled);
      get_opt(v, "uplink", c.traffic.voip_uplink);
      get_opt(v, "packet_interval_ms", c.traffic.voip.packet_interval_ms);
      get_opt(v, "payload_bytes", c.traffic.voip.payload_bytes);
      get_opt(v, "delay_budget_ms", c.traffic.voip.delay_budget_ms);
      get_opt(v, "users_per_operator", c.traffic.voip_users_per_operator);
    }
    if (p.contains("load_lambda_per_s")) {
      for (auto it = p.at("load_lambda_per_s").begin(); it != p.at("load_lambda_per_s").end(); ++it) {
        traffic::parse_load_class(it.key());
        c.traffic.load_lambda_per_s[it.key()] = it.value().get<double>();
      }
    }
  }
  if (j.contains("metrics")) {
    const auto& p = j.at("metrics");
    check_keys(p, {"occupancy_threshold_dbm", "rssi_enabled", "voip_max_late_fraction"}, "metrics");
    get_opt(p, "occupancy_threshold_dbm", c.metrics.occupancy_threshold_dbm);
    get_opt(p, "rssi_enabled", c.metrics.rssi_enabled);
    get_opt(p, "voip_max_late_fraction", c.metrics.voip_max_late_fraction);
  }
  if (j.contains("run")) {
    const auto& p = j.at("run");
    check_keys(p, {"master_seed", "replications", "duration_s", "calibration_replications", "calibration_duration_s"},
               "run");
    get_opt(p, "master_seed", c.run.master_seed);
    get_opt(p, "replications", c.run.replications);
    get_opt(p, "duration_s", c.run.duration_s);
    get_opt(p, "calibration_replications", c.run.calibration_replications);
    get_opt(p, "calibration_duration_s", c.run.calibration_duration_s);
  }
  c.validate();
  return c;
}

inline nlohmann::json config_to_json(const ScenarioConfig& c) {
  using nlohmann::json;
  json classes = json::array();
  for (const auto& k : c.lbt.class_overrides)
    classes.push_back({{"class_id", k.class_id},
                       {"cws_set", k.cws_set},
                       {"mcot_shared_us", k.mcot_shared_us},
                       {"mcot_exclusive_us", k.mcot_exclusive_us},
                       {"defer_slots", k.defer_slots}});
  json lbt = {{"priority_class", c.lbt.priority_class},
              {"classes", classes},
              {"ecca_slot_us", c.lbt.ecca_slot_us},
              {"defer_base_us", c.lbt.defer_base_us},
              {"p_h_dbm", c.lbt.p_h_dbm},
              {"shared_band", c.lbt.shared_band},
              {"reservation_signal", c.lbt.reservation_signal},
              {"japan_mode", c.lbt.japan_mode},
              {"feedback_delay_subframes", c.lbt.feedback_delay_subframes},
              {"control_decode_sinr_db", c.lbt.control_decode_sinr_db},
              {"drs",
               {{"enabled", c.lbt.drs_enabled},
                {"dmtc_period_ms", c.lbt.drs.dmtc_period_ms},
                {"dmtc_offset_ms", c.lbt.drs.dmtc_offset_ms},
                {"dmtc_window_ms", c.lbt.drs.dmtc_window_ms},
                {"drs_symbols", c.lbt.drs.drs_symbols}}}};
  if (c.lbt.exclusive_threshold_dbm) lbt["exclusive_threshold_dbm"] = *c.lbt.exclusive_threshold_dbm;
  json lambdas = json::object();
  for (const auto& [k, v] : c.traffic.load_lambda_per_s) lambdas[k] = v;
  return json{
      {"schema_version", c.schema_version},
      {"scenario_kind", c.scenario_kind},
      {"building", {{"length_m", c.building.length_m}, {"width_m", c.building.width_m}}},
      {"topology",
       {{"nodes_per_operator", c.topology.nodes_per_operator},
        {"clients_per_operator", c.topology.clients_per_operator},
        {"op2_offset_min_m", c.topology.op2_offset_min_m},
        {"op2_offset_max_m", c.topology.op2_offset_max_m}}},
      {"power", {{"ap_dbm", c.power.ap_dbm}, {"enb_dbm", c.power.enb_dbm}, {"sta_dbm", c.power.sta_dbm}}},
      {"carriers",
       {{"licensed_anchor", c.carriers.licensed_anchor},
        {"laa_data_on_licensed", c.carriers.laa_data_on_licensed},
        {"licensed_rate_mbps", c.carriers.licensed_rate_mbps},
        {"cross_carrier_scheduling", c.carriers.cross_carrier_scheduling}}},
      {"channel",
       {{"pathloss_exponent", c.channel.pathloss_exponent},
        {"reference_loss_db", c.channel.reference_loss_db},
        {"wall_loss_db", c.channel.wall_loss_db},
        {"shadowing_sigma_db", c.channel.shadowing_sigma_db},
        {"noise_figure_db", c.channel.noise_figure_db},
        {"bandwidth_mhz", c.channel.bandwidth_mhz},
        {"min_distance_m", c.channel.min_distance_m}}},
      {"rate",
       {{"efficiency_laa", c.rate.efficiency_laa},
        {"efficiency_wifi", c.rate.efficiency_wifi},
        {"cap_laa_mbps", c.rate.cap_laa_bps / 1e6},
        {"cap_wifi_mbps", c.rate.cap_wifi_bps / 1e6},
        {"decode_margin_db", c.rate.decode_margin_db},
        {"link_adaptation", c.rate.link_adaptation},
        {"la_failure_step_db", c.rate.la_failure_step_db},
        {"la_success_step_db", c.rate.la_success_step_db},
        {"la_max_backoff_laa_db", c.rate.la_max_backoff_laa_db},
        {"la_max_backoff_wifi_db", c.rate.la_max_backoff_wifi_db},
        {"min_rate_laa_mbps", c.rate.min_rate_laa_bps / 1e6},
        {"min_rate_wifi_mbps", c.rate.min_rate_wifi_bps / 1e6}}},
      {"dcf",
       {{"slot_us", c.dcf.slot_us},
        {"sifs_us", c.dcf.sifs_us},
        {"difs_us", c.dcf.difs_us},
        {"cw_min", c.dcf.cw_min},
        {"cw_max", c.dcf.cw_max},
        {"ack_duration_us", c.dcf.ack_duration_us},
        {"max_ppdu_us", c.dcf.max_ppdu_us},
        {"phy_header_us", c.dcf.phy_header_us},
        {"retry_limit", c.dcf.retry_limit},
        {"cca_ed_dbm", c.dcf.cca_ed_dbm},
        {"preamble_detect", c.dcf.preamble_detect},
        {"preamble_detect_dbm", c.dcf.preamble_detect_dbm},
        {"ack_decode_sinr_db", c.dcf.ack_decode_sinr_db}}},
      {"lbt", lbt},
      {"traffic",
       {{"file_size_bytes", c.traffic.file_size_bytes},
        {"dl_arrival_rate_per_s", c.traffic.dl_arrival_rate_per_s},
        {"ul_fraction", c.traffic.ul_fraction},
        {"voip",
         {{"enabled", c.traffic.voip_enabled},
          {"uplink", c.traffic.voip_uplink},
          {"packet_interval_ms", c.traffic.voip.packet_interval_ms},
          {"payload_bytes", c.traffic.voip.payload_bytes},
          {"delay_budget_ms", c.traffic.voip.delay_budget_ms},
          {"users_per_operator", c.traffic.voip_users_per_operator}}},
        {"load_lambda_per_s", lambdas}}},
      {"metrics",
       {{"occupancy_threshold_dbm", c.metrics.occupancy_threshold_dbm},
        {"rssi_enabled", c.metrics.rssi_enabled},
        {"voip_max_late_fraction", c.metrics.voip_max_late_fraction}}},
      {"run",
       {{"master_seed", c.run.master_seed},
        {"replications", c.run.replications},
        {"duration_s", c.run.duration_s},
        {"calibration_replications", c.run.calibration_replications},
        {"calibration_duration_s", c.run.calibration_duration_s}}},
  };
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config '" + path + "' is not valid JSON: " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config '" + path + "': " + e.what());
  }
}

}  // namespace coexist
