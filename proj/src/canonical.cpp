#include "qbc/canonical.hpp"

#include <cstdio>
#include <stdexcept>

namespace qbc {

std::string canonical_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_real(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (!v.is_string()) throw ParseError("expected a decimal string");
  const std::string& s = v.get_ref<const std::string&>();
  size_t pos = 0;
  double x;
  try {
    x = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ParseError("bad decimal string: " + s);
  }
  if (pos != s.size()) throw ParseError("bad decimal string: " + s);
  return x;
}

json state_to_json(const StateVector& s) {
  return json{
      {"a0", {canonical_real(s[0].real()), canonical_real(s[0].imag())}},
      {"a1", {canonical_real(s[1].real()), canonical_real(s[1].imag())}},
  };
}

StateVector state_from_json(const json& v) {
  const auto& a0 = v.at("a0");
  const auto& a1 = v.at("a1");
  return StateVector(Complex(parse_real(a0.at(0)), parse_real(a0.at(1))),
                     Complex(parse_real(a1.at(0)), parse_real(a1.at(1))));
}

std::string canonical_dump(const json& j) { return j.dump(); }

}  // namespace qbc
