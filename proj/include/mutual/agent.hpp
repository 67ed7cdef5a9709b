#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mutual/transcript.hpp"

namespace mutual {

// What an agent wants to do when activated: candidate utterances (the
// session's pacing decides how many are sent) or a selection.
struct AgentTurn {
  std::vector<std::string> utterances;
  std::optional<int> select;  // row in the agent's own KB
};

class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string kind() const = 0;
  // Every logged event in order, own ones included. The partner's
  // selections arrive without the item.
  virtual void observe(const Event& ev) = 0;
  virtual AgentTurn act(std::int64_t now_ms, bool can_select) = 0;
};

}  // namespace mutual
