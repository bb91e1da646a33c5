#pragma once

// Suite templates and the shipped fixture catalog.
//
// A template is a suite document without "items" but with two extra keys:
//   "slots": {"noun": [["farmer", "farmers"], ["author", "authors"]], ...}
//   "frame": {"sg_match": {"subject": "The {noun}", "verb": "{verb.1}"}, ...}
// `{slot}` is form 0 of the current filler and `{slot.N}` is form N. Items
// are the cross product of fillers, slots taken in name order with the last
// one varying fastest, numbered from 1 and cut at the limit.

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sgeval/suite.hpp"

namespace sg {

struct SuiteTemplate {
  TestSuite skeleton;  // no items
  std::map<std::string, std::vector<std::vector<std::string>>> slots;
  std::map<std::string, std::map<std::string, std::string>> frame;  // condition -> region -> text
};

/// Throws SuiteError on malformed documents, unknown keys, and frames that
/// do not cover every (condition, region).
SuiteTemplate parse_template(std::string_view document);

/// Throws SuiteError for placeholders naming an undeclared slot or a missing
/// form, and for empty slots. Whitespace runs produced by empty forms are
/// collapsed.
TestSuite expand(const SuiteTemplate& tmpl, std::size_t limit);

inline constexpr std::size_t kFixtureItemLimit = 10;

/// Directory holding the shipped *.template.json files.
std::filesystem::path default_template_dir();

/// Every template in `dir` expanded with kFixtureItemLimit, sorted by name.
std::vector<TestSuite> fixture_catalog(const std::filesystem::path& dir = default_template_dir());

/// Smallest distance, in word tokens, from the last token of the first
/// region that differs between the conditions a suite's predictions compare
/// to the first token of a measured region; minimum over items and
/// conditions. 0 when the differing region is not before the measured one.
/// A model of order n cannot see the manipulation from the measured region
/// when this is at least n.
std::size_t critical_dependency_span(const TestSuite& suite);

}  // namespace sg
