#include "dusc/query.hpp"

#include <cctype>
#include <charconv>

namespace dusc::query {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<Term> parse_term(std::string_view t) {
  // Two-character operators first so "<=" is not read as "<".
  static constexpr std::pair<std::string_view, Op> ops[] = {
      {"<=", Op::le}, {">=", Op::ge}, {"!=", Op::ne},
      {"<", Op::lt},  {">", Op::gt},  {"=", Op::eq},
  };
  for (const auto& [tok, op] : ops) {
    auto pos = t.find(tok);
    if (pos == std::string_view::npos) continue;
    std::string_view key = trim(t.substr(0, pos));
    std::string_view value = trim(t.substr(pos + tok.size()));
    if (key.empty() || value.empty()) return std::nullopt;
    auto has_space = [](std::string_view s) {
      for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) return true;
      }
      return false;
    };
    if (has_space(key) || has_space(value)) return std::nullopt;
    return Term{std::string(key), op, std::string(value)};
  }
  return std::nullopt;
}

bool numeric(std::string_view s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool compare(const std::string& lhs, Op op, const std::string& rhs) {
  double a = 0, b = 0;
  int cmp;
  if (numeric(lhs, a) && numeric(rhs, b)) {
    cmp = a < b ? -1 : (a > b ? 1 : 0);
  } else {
    cmp = lhs.compare(rhs);
    cmp = cmp < 0 ? -1 : (cmp > 0 ? 1 : 0);
  }
  switch (op) {
    case Op::eq: return cmp == 0;
    case Op::ne: return cmp != 0;
    case Op::lt: return cmp < 0;
    case Op::le: return cmp <= 0;
    case Op::gt: return cmp > 0;
    case Op::ge: return cmp >= 0;
  }
  return false;
}

}  // namespace

std::optional<Predicate> parse(std::string_view text) {
  Predicate p;
  std::string_view rest = trim(text);
  if (rest.empty()) return p;
  while (true) {
    auto pos = rest.find(" AND ");
    std::string_view chunk = pos == std::string_view::npos ? rest : rest.substr(0, pos);
    auto term = parse_term(trim(chunk));
    if (!term) return std::nullopt;
    p.terms.push_back(std::move(*term));
    if (pos == std::string_view::npos) break;
    rest = rest.substr(pos + 5);
    if (trim(rest).empty()) return std::nullopt;  // trailing AND
  }
  return p;
}

bool eval(const Predicate& p, const std::map<std::string, std::string>& attrs) {
  for (const Term& t : p.terms) {
    auto it = attrs.find(t.key);
    if (it == attrs.end()) return false;
    if (!compare(it->second, t.op, t.value)) return false;
  }
  return true;
}

}  // namespace dusc::query
