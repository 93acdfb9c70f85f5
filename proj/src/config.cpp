#include "reason/config.hpp"

#include <json.hpp>

namespace reason {

void MachineConfig::check() const {
  auto pos = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  pos(tree_depth, "tree_depth");
  pos(pe_count, "pe_count");
  pos(banks, "banks");
  pos(regs_per_bank, "regs_per_bank");
  pos(pipeline_interval, "pipeline_interval");
  pos(broadcast_latency_per_level, "broadcast_latency_per_level");
  pos(fifo_depth, "fifo_depth");
  pos(sram_words, "sram_words");
  pos(sram_hit_latency, "sram_hit_latency");
  pos(dma_latency, "dma_latency");
  pos(scalar_op_latency, "scalar_op_latency");
  // Each leaf reads up to 2 operands per cycle, each from a distinct bank.
  if (banks < leaves_per_pe() * 2)
    throw ConfigError("banks must be >= 2 * leaves_per_pe");
}

MachineConfig MachineConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config json: ") + e.what());
  }
  MachineConfig cfg;
  bool interval_given = j.contains("pipeline_interval");
  auto get = [&](const char* key, int& field) {
    if (j.contains(key)) field = j.at(key).get<int>();
  };
  get("tree_depth", cfg.tree_depth);
  get("pe_count", cfg.pe_count);
  get("banks", cfg.banks);
  get("regs_per_bank", cfg.regs_per_bank);
  get("pipeline_interval", cfg.pipeline_interval);
  get("broadcast_latency_per_level", cfg.broadcast_latency_per_level);
  get("fifo_depth", cfg.fifo_depth);
  get("sram_words", cfg.sram_words);
  get("sram_hit_latency", cfg.sram_hit_latency);
  get("dma_latency", cfg.dma_latency);
  get("scalar_op_latency", cfg.scalar_op_latency);
  if (!interval_given) cfg.pipeline_interval = cfg.tree_depth + 1;
  cfg.check();
  return cfg;
}

std::string MachineConfig::to_json() const {
  nlohmann::json j;
  j["tree_depth"] = tree_depth;
  j["pe_count"] = pe_count;
  j["banks"] = banks;
  j["regs_per_bank"] = regs_per_bank;
  j["pipeline_interval"] = pipeline_interval;
  j["broadcast_latency_per_level"] = broadcast_latency_per_level;
  j["fifo_depth"] = fifo_depth;
  j["sram_words"] = sram_words;
  j["sram_hit_latency"] = sram_hit_latency;
  j["dma_latency"] = dma_latency;
  j["scalar_op_latency"] = scalar_op_latency;
  return j.dump(2);
}

}  // namespace reason
