// Indoor two-operator layout: equally spaced small cells along the building's
// long axis, a random shift for the second operator, uniform client drops.
#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "coexist/config.hpp"
#include "coexist/medium.hpp"
#include "coexist/sim_core.hpp"

namespace coexist {

struct Topology {
  std::vector<NodePosition> nodes;  // infrastructure of op1, op2, then clients of op1, op2
  std::vector<int> serving;         // per node: serving infrastructure node for clients, -1 otherwise
  double op2_offset_m = 0.0;

  std::vector<int> infrastructure(int op) const {
    std::vector<int> v;
    for (const auto& n : nodes)
      if (n.operator_id == op && is_infrastructure(n.kind)) v.push_back(n.node_id);
    return v;
  }
  std::vector<int> clients(int op) const {
    std::vector<int> v;
    for (const auto& n : nodes)
      if (n.operator_id == op && !is_infrastructure(n.kind)) v.push_back(n.node_id);
    return v;
  }
};

/// Node positions and client association. Node kinds are set from `techs`;
/// positions depend only on the config and the stream, so both steps of a
/// replication share one layout.
inline Topology build_indoor_topology(const ScenarioConfig& cfg, RngStream& stream, std::uint64_t shadow_seed,
                                      std::array<Technology, 2> techs = {Technology::WiFi, Technology::WiFi}) {
  const auto& b = cfg.building;
  const auto& t = cfg.topology;
  const bool along_x = b.length_m >= b.width_m;
  const double long_dim = along_x ? b.length_m : b.width_m;
  const double short_dim = along_x ? b.width_m : b.length_m;
  const int per_op = t.nodes_per_operator;
  const double spacing = long_dim / per_op;
  if (spacing <= 0.0) throw std::invalid_argument("building too small");

  Topology topo;
  auto place = [&](double along, double across) {
    return along_x ? std::pair{along, across} : std::pair{across, along};
  };
  auto infra_kind = [](Technology te) { return te == Technology::LAA ? NodeKind::LaaEnb : NodeKind::WifiAp; };
  auto client_kind = [](Technology te) { return te == Technology::LAA ? NodeKind::LaaUe : NodeKind::WifiSta; };

  topo.op2_offset_m = stream.uniform(t.op2_offset_min_m, t.op2_offset_max_m);
  for (int op = 1; op <= 2; ++op) {
    for (int k = 0; k < per_op; ++k) {
      double along = spacing * (k + 0.5);
      if (op == 2) along = std::clamp(along + topo.op2_offset_m, 0.0, long_dim);
      auto [x, y] = place(along, short_dim / 2.0);
      topo.nodes.push_back(NodePosition{x, y, static_cast<int>(topo.nodes.size()), op, infra_kind(techs[op - 1])});
    }
  }
  for (int op = 1; op <= 2; ++op) {
    for (int k = 0; k < t.clients_per_operator; ++k) {
      const double x = stream.uniform(0.0, b.length_m);
      const double y = stream.uniform(0.0, b.width_m);
      topo.nodes.push_back(NodePosition{x, y, static_cast<int>(topo.nodes.size()), op, client_kind(techs[op - 1])});
    }
  }

  topo.serving.assign(topo.nodes.size(), -1);
  for (const auto& c : topo.nodes) {
    if (is_infrastructure(c.kind)) continue;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& n : topo.nodes) {
      if (!is_infrastructure(n.kind) || n.operator_id != c.operator_id) continue;
      const double pl = pathloss_db(cfg.channel, c, n,
                                    link_shadowing_db(shadow_seed, c.node_id, n.node_id, cfg.channel.shadowing_sigma_db));
      if (pl < best) {
        best = pl;
        topo.serving[static_cast<std::size_t>(c.node_id)] = n.node_id;
      }
    }
  }
  return topo;
}

}  // namespace coexist
