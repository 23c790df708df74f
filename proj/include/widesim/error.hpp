#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace widesim {

enum class Errc {
  PastEvent,
  UnknownEntity,
  AlreadyRunning,
  DisconnectedTopology,
  NoRoute,
  InsufficientCapacity,
  VmNotRunning,
  VmBusy,
  CycleDetected,
  DanglingReference,
  OrphanInput,
  UnknownWorkflow,
  PolicyError,
  SchemaError,
  AsymmetricNeighbor,
  DuplicateId,
  ValidationError,
  IoError,
};

constexpr std::string_view errc_name(Errc e) {
  switch (e) {
    case Errc::PastEvent: return "PastEvent";
    case Errc::UnknownEntity: return "UnknownEntity";
    case Errc::AlreadyRunning: return "AlreadyRunning";
    case Errc::DisconnectedTopology: return "DisconnectedTopology";
    case Errc::NoRoute: return "NoRoute";
    case Errc::InsufficientCapacity: return "InsufficientCapacity";
    case Errc::VmNotRunning: return "VmNotRunning";
    case Errc::VmBusy: return "VmBusy";
    case Errc::CycleDetected: return "CycleDetected";
    case Errc::DanglingReference: return "DanglingReference";
    case Errc::OrphanInput: return "OrphanInput";
    case Errc::UnknownWorkflow: return "UnknownWorkflow";
    case Errc::PolicyError: return "PolicyError";
    case Errc::SchemaError: return "SchemaError";
    case Errc::AsymmetricNeighbor: return "AsymmetricNeighbor";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::ValidationError: return "ValidationError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

// All library failures are reported as widesim::Error. what() reads
// "<module>: <Kind>: <message>".
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string_view module, const std::string& message)
      : std::runtime_error(std::string(module) + ": " + std::string(errc_name(code)) + ": " + message),
        code_(code),
        module_(module),
        message_(message) {}

  Errc code() const noexcept { return code_; }
  const std::string& module() const noexcept { return module_; }
  const std::string& message() const noexcept { return message_; }

 private:
  Errc code_;
  std::string module_;
  std::string message_;
};

}  // namespace widesim
