#pragma once

#include <string>

#include "json.hpp"
#include "lidsa/engine.hpp"

namespace lidsa {

// One decision per step. Controllers see the full world state and return
// advisories and gates; the kernel enforces physics on top of both.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual ControlDecision decide(const WorldState& world) = 0;
  virtual nlohmann::json stats() const { return nlohmann::json::object(); }
};

}  // namespace lidsa
