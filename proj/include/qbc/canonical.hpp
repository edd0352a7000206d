#pragma once

#include <json.hpp>

#include <string>

#include "qbc/qubit.hpp"

namespace qbc {

using json = nlohmann::json;

// Real numbers travel as decimal strings with 17 significant digits, so that
// encoding a message twice yields byte-identical output and decoding is an
// exact round trip. Objects are key-sorted by the json library already.
std::string canonical_real(double x);
double parse_real(const json& v);

json state_to_json(const StateVector& s);
StateVector state_from_json(const json& v);

// Single-line canonical dump (no indentation, sorted keys).
std::string canonical_dump(const json& j);

}  // namespace qbc
