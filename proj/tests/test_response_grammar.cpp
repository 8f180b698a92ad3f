#include <doctest.h>

#include <stdexcept>

#include <regex>
#include <string>

#include "viarl/response_grammar.hpp"
#include "viarl/rng.hpp"

using namespace viarl;

namespace {

const PromptSpec k128{128, 8, ""};

std::vector<std::int64_t> v(std::initializer_list<std::int64_t> xs) { return xs; }

}  // namespace

TEST_CASE("prompt spec validation") {
  auto check = [](std::size_t t, std::size_t n) { PromptSpec{t, n, "q"}.validate(); };
  CHECK_NOTHROW(check(2, 1));
  CHECK_THROWS_AS(check(1, 1), std::invalid_argument);
  CHECK_THROWS_AS(check(8, 8), std::invalid_argument);
  CHECK_THROWS_AS(check(8, 0), std::invalid_argument);
}

TEST_CASE("render_prompt substitutes the template slots") {
  const std::string p = render_prompt({128, 8, "what happens first?"});
  CHECK(p.find("a video with 128 frames") != std::string::npos);
  CHECK(p.find("range of 0 to 127") != std::string::npos);
  CHECK(p.find("output 8 indices") != std::string::npos);
  CHECK(p.find("<think> thinking about keywords and visual appearance here </think><index> target list here "
               "</index>") != std::string::npos);
  CHECK(p.find('{') == std::string::npos);
  CHECK(p.find("what happens first?") != std::string::npos);

  const std::string tiny = render_prompt({2, 1, "q"});
  CHECK(tiny.find("with 2 frames") != std::string::npos);
  CHECK(tiny.find("0 to 1.") != std::string::npos);
}

TEST_CASE("render_prompt values re-extract") {
  const std::string p = render_prompt({32, 4, "Where is the red car?"});
  std::smatch m;
  REQUIRE(std::regex_search(p, m, std::regex(R"(a video with (\d+) frames)")));
  CHECK(std::stoul(m[1]) == 32);
  REQUIRE(std::regex_search(p, m, std::regex(R"(output (\d+) indices)")));
  CHECK(std::stoul(m[1]) == 4);
  REQUIRE(std::regex_search(p, m, std::regex(R"(range of 0 to (\d+))")));
  CHECK(std::stoul(m[1]) == 31);
  REQUIRE(std::regex_search(p, m, std::regex(R"(list consists of (\d+) values)")));
  CHECK(std::stoul(m[1]) == 4);
}

TEST_CASE("parse_response examples") {
  auto r = parse_response("<think> red car appears late </think><index> [3, 17, 22, 41, 55, 78, 90, 101] </index>",
                          k128);
  CHECK(r.verdict == Verdict::WellFormed);
  CHECK(*r.indices == v({3, 17, 22, 41, 55, 78, 90, 101}));
  CHECK(*r.think_text == "red car appears late");

  CHECK(parse_response("<index> [1,2] </index>", k128).verdict == Verdict::FormatError);
  r = parse_response("<think> x </think><index> [1,1,2,3,4,5,6,7] </index>", k128);
  CHECK(r.verdict == Verdict::IndexError);
  CHECK(r.think_text == "x");
}

TEST_CASE("response_length counts whitespace tokens of the think block") {
  CHECK(response_length(parse_response("<think> a b  c </think><index> [0] </index>", {4, 1, ""})) == 3);
  CHECK(response_length(parse_response("garbage", k128)) == 0);
  std::string think;
  for (int i = 0; i < 120; ++i) think += "tok\t";
  CHECK(response_length(parse_response("<think>" + think + "</think><index>[0]</index>", {4, 1, ""})) == 120);
  CHECK(response_length(parse_response("<think></think><index>[0]</index>", {4, 1, ""})) == 0);
}

TEST_CASE("canonical text") {
  const auto idx = v({5, 1});
  CHECK(canonical_text("hi there", idx) == "<think> hi there </think><index> [5, 1] </index>");
}

TEST_CASE("indices_valid") {
  const PromptSpec s{4, 2, ""};
  CHECK(indices_valid(v({0, 3}), s));
  CHECK_FALSE(indices_valid(v({0, 4}), s));
  CHECK_FALSE(indices_valid(v({-1, 2}), s));
  CHECK_FALSE(indices_valid(v({2, 2}), s));
  CHECK_FALSE(indices_valid(v({1}), s));
}

TEST_CASE("round trip of well-formed responses") {
  Rng rng(3);
  const std::string words[] = {"red", "car", "at", "the", "start", "x", "123", "<i>"};
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t T = 2 + rng.below(200);
    const std::size_t n = 1 + rng.below(std::min<std::size_t>(T - 1, 12));
    const PromptSpec spec{T, n, ""};
    std::string think;
    const std::size_t nw = rng.below(6);
    for (std::size_t i = 0; i < nw; ++i) think += (i ? " " : "") + words[rng.below(std::size(words))];
    std::vector<std::int64_t> all(T);
    for (std::size_t i = 0; i < T; ++i) all[i] = static_cast<std::int64_t>(i);
    for (std::size_t i = 0; i < n; ++i) std::swap(all[i], all[i + rng.below(T - i)]);
    all.resize(n);

    const auto first = parse_response(canonical_text(think, all), spec);
    REQUIRE(first.verdict == Verdict::WellFormed);
    CHECK(*first.indices == all);
    const auto second = parse_response(canonical_text(*first.think_text, *first.indices), spec);
    CHECK(second.verdict == first.verdict);
    CHECK(second.think_text == first.think_text);
    CHECK(second.indices == first.indices);
  }
}

TEST_CASE("whitespace outside delimiters does not change validity") {
  Rng rng(9);
  const char* spaces[] = {"", " ", "\n", "\t ", "   \r\n"};
  auto ws = [&] { return std::string(spaces[rng.below(std::size(spaces))]); };
  const PromptSpec spec{32, 3, ""};
  for (int trial = 0; trial < 500; ++trial) {
    const std::string text = ws() + "<think>" + ws() + "look" + ws() + "</think>" + ws() + "<index>" + ws() + "[" +
                             ws() + "4" + ws() + "," + ws() + "9" + ws() + "," + ws() + "31" + ws() + "]" + ws() +
                             "</index>" + ws();
    const auto r = parse_response(text, spec);
    CHECK(r.verdict == Verdict::WellFormed);
    CHECK(*r.indices == v({4, 9, 31}));
  }
}

TEST_CASE("verdict partition on arbitrary strings") {
  // Random byte soup drawn from grammar fragments; the parser must classify
  // each input exactly once and the fields must agree with the verdict.
  Rng rng(11);
  const std::string pieces[] = {"<think>", "</think>", "<index>", "</index>", "[", "]", ",", "1", "2",
                                "-3",      "x",        " ",       "99",       "[1, 2]", "<", ">"};
  const PromptSpec spec{10, 2, ""};
  for (int trial = 0; trial < 5000; ++trial) {
    std::string s;
    const std::size_t len = rng.below(12);
    for (std::size_t i = 0; i < len; ++i) s += pieces[rng.below(std::size(pieces))];
    const auto r = parse_response(s, spec);
    CHECK(r.raw_text == s);
    switch (r.verdict) {
      case Verdict::WellFormed:
        REQUIRE(r.indices);
        CHECK(indices_valid(*r.indices, spec));
        CHECK(r.think_text);
        break;
      case Verdict::IndexError:
        REQUIRE(r.indices);
        CHECK_FALSE(indices_valid(*r.indices, spec));
        break;
      case Verdict::FormatError: CHECK_FALSE(r.indices); break;
    }
  }
}

#include "parser_golden.hpp"

TEST_CASE("golden parser cases") {
  const auto cases = viarl::testing::parser_golden_cases();
  CHECK(cases.size() >= 50);
  for (const auto& c : cases) {
    CAPTURE(c.text);
    const auto r = parse_response(c.text, c.spec);
    CHECK(r.verdict == c.verdict);
    CHECK(r.indices == c.indices);
  }
}
