#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Tiny predicate dialect over attribute maps: equality and range terms
// joined by AND, e.g. "type=heart-rate AND year>=2020". Queries are
// opaque pass-through strings elsewhere; only the harness evaluates them.
namespace dusc::query {

enum class Op { eq, ne, lt, le, gt, ge };

struct Term {
  std::string key;
  Op op;
  std::string value;
};

struct Predicate {
  std::vector<Term> terms;  // empty predicate matches everything
};

// nullopt on syntax errors; empty/blank text parses to the empty predicate.
std::optional<Predicate> parse(std::string_view text);

// Total: a missing attribute fails the term, it never raises.
bool eval(const Predicate& p, const std::map<std::string, std::string>& attrs);

}  // namespace dusc::query
