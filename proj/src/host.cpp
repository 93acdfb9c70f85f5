#include "reason/host.hpp"

#include <utility>

#include <json.hpp>

#include "reason/compiler.hpp"

namespace reason {

using nlohmann::json;

HostRuntime::~HostRuntime() {
  std::unique_lock<std::mutex> lk(mu_);
  for (auto& [id, slot] : slots_) {
    cv_.wait(lk, [&] { return slot->status == SlotStatus::IDLE; });
    if (slot->worker.joinable()) slot->worker.join();
  }
}

HostRuntime::Slot& HostRuntime::slot_locked(int batch_id) {
  auto& p = slots_[batch_id];
  if (!p) p = std::make_unique<Slot>();
  return *p;
}

void HostRuntime::execute(int batch_id, std::function<std::string()> work) {
  std::unique_lock<std::mutex> lk(mu_);
  Slot& s = slot_locked(batch_id);
  if (s.status == SlotStatus::EXECUTION)
    throw BusySlot("batch slot " + std::to_string(batch_id) + " is executing");
  if (s.worker.joinable()) s.worker.join();
  s.status = SlotStatus::EXECUTION;
  s.symbolic_ready = false;
  s.result.clear();
  s.error.clear();
  Slot* sp = &s;
  s.worker = std::thread([this, sp, work = std::move(work)] {
    std::string out, err;
    try {
      out = work();
    } catch (const std::exception& e) {
      err = e.what();
    }
    std::lock_guard<std::mutex> lg(mu_);
    sp->result = std::move(out);
    sp->error = std::move(err);
    sp->symbolic_ready = true;
    sp->status = SlotStatus::IDLE;
    cv_.notify_all();
  });
}

void HostRuntime::execute_probabilistic(
    int batch_id, const Dag& dag,
    const std::unordered_map<NodeId, double>& leaf_inputs, const MachineConfig& cfg) {
  Dag copy = dag;
  auto inputs = leaf_inputs;
  execute(batch_id, [copy = std::move(copy), inputs = std::move(inputs), cfg]() {
    MappedProgram prog = compile(copy, cfg);
    auto [result, rep] = run_probabilistic(prog, inputs);
    json j;
    j["mode"] = "probabilistic";
    j["root"] = result.value();
    j["total_cycles"] = rep.total_cycles;
    return j.dump();
  });
}

void HostRuntime::execute_sat(int batch_id, const CnfFormula& cnf,
                              const MachineConfig& cfg) {
  CnfFormula copy = cnf;
  execute(batch_id, [copy = std::move(copy), cfg]() {
    auto [result, rep] = run_symbolic_sat(copy, cfg);
    json j;
    j["mode"] = "sat";
    j["verdict"] = result.verdict == Verdict::SAT ? "SAT" : "UNSAT";
    if (result.verdict == Verdict::SAT) j["model"] = result.model;
    j["decisions"] = result.decisions;
    j["conflicts"] = result.conflicts;
    j["total_cycles"] = rep.total_cycles;
    return j.dump();
  });
}

SlotStatus HostRuntime::check_status(int batch_id, bool blocking) {
  std::unique_lock<std::mutex> lk(mu_);
  Slot& s = slot_locked(batch_id);
  if (blocking) cv_.wait(lk, [&] { return s.status == SlotStatus::IDLE; });
  return s.status;
}

bool HostRuntime::symbolic_ready(int batch_id) {
  std::lock_guard<std::mutex> lk(mu_);
  return slot_locked(batch_id).symbolic_ready;
}

std::string HostRuntime::result(int batch_id) {
  std::unique_lock<std::mutex> lk(mu_);
  Slot& s = slot_locked(batch_id);
  cv_.wait(lk, [&] { return s.status == SlotStatus::IDLE; });
  if (!s.error.empty()) throw SimError("batch failed: " + s.error);
  return s.result;
}

}  // namespace reason
