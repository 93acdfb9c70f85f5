#pragma once

#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>

#include "reason/config.hpp"
#include "reason/dag.hpp"
#include "reason/logic.hpp"
#include "reason/sim.hpp"

namespace reason {

struct BusySlot : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class SlotStatus { IDLE, EXECUTION };

// Flag-buffer handshake between the driving host and the accelerator:
// execute() marks the batch slot busy and runs the kernel on a worker;
// completion stores the result and raises symbolic_ready; check_status
// polls or blocks on the flag.
class HostRuntime {
 public:
  ~HostRuntime();

  // Generic entry: `work` produces the serialized result for this batch.
  void execute(int batch_id, std::function<std::string()> work);

  // Kernel-specific entries.
  void execute_probabilistic(int batch_id, const Dag& dag,
                             const std::unordered_map<NodeId, double>& leaf_inputs,
                             const MachineConfig& cfg);
  void execute_sat(int batch_id, const CnfFormula& cnf, const MachineConfig& cfg);

  SlotStatus check_status(int batch_id, bool blocking);
  bool symbolic_ready(int batch_id);
  // Valid once check_status returned IDLE after an execute.
  std::string result(int batch_id);

 private:
  struct Slot {
    SlotStatus status = SlotStatus::IDLE;
    bool symbolic_ready = false;
    std::string result;
    std::string error;
    std::thread worker;
  };
  Slot& slot_locked(int batch_id);

  std::mutex mu_;
  std::condition_variable cv_;
  std::map<int, std::unique_ptr<Slot>> slots_;
};

}  // namespace reason
