#include "agentfuzz/random.hpp"

#include <sstream>

#include "agentfuzz/errors.hpp"

namespace agentfuzz {

std::string serialize_rng(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

Rng deserialize_rng(const std::string& state) {
  Rng rng;
  std::istringstream in(state);
  in >> rng;
  if (!in) throw SchemaError("corrupt rng state");
  return rng;
}

}  // namespace agentfuzz
