#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace reason {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MachineConfig {
  int tree_depth = 3;   // D: internal levels above the leaf row
  int pe_count = 12;
  int banks = 64;       // B
  int regs_per_bank = 32;  // R
  int pipeline_interval = 4;  // D + 1 by default
  int broadcast_latency_per_level = 1;
  int fifo_depth = 8;
  int sram_words = 4096;
  int sram_hit_latency = 1;
  int dma_latency = 6;
  int scalar_op_latency = 1;

  int leaves_per_pe() const { return 1 << tree_depth; }
  int tree_nodes_per_pe() const { return (1 << (tree_depth + 1)) - 1; }

  void check() const;  // throws ConfigError on invariant violations

  static MachineConfig defaults() { return {}; }
  static MachineConfig from_json(const std::string& text);
  std::string to_json() const;
};

}  // namespace reason
