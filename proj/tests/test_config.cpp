#include <cstdio>

#include "doctest.h"
#include "doughlab/config.hpp"

using namespace dough;

TEST_CASE("config parses sections, comments and values") {
  Config c = Config::parse(
      "# comment\n"
      "top = 1\n"
      "[sim]\n"
      "dt = 0.02\n"
      "damping = 0.98\n"
      "\n"
      "[trajopt]\n"
      "iters = 200\n"
      "task = liftspread2d\n");
  CHECK(c.get_int("top", 0) == 1);
  CHECK(c.get_double("sim.dt", 0) == doctest::Approx(0.02));
  CHECK(c.get_int("trajopt.iters", 0) == 200);
  CHECK(c.get_str("trajopt.task", "") == "liftspread2d");
  CHECK(c.get_str("absent", "fallback") == "fallback");
}

TEST_CASE("config round-trips through to_text") {
  Config c;
  c.set("a.x", "1");
  c.set("a.y", "hello");
  c.set("b.z", "0.5");
  c.set("plain", "v");
  Config back = Config::parse(c.to_text());
  CHECK(back.get_str("a.x", "") == "1");
  CHECK(back.get_str("a.y", "") == "hello");
  CHECK(back.get_str("b.z", "") == "0.5");
  CHECK(back.get_str("plain", "") == "v");
}

TEST_CASE("config merge overlays values") {
  Config base = Config::parse("[s]\na = 1\nb = 2\n");
  Config over = Config::parse("[s]\nb = 3\nc = 4\n");
  base.merge(over);
  CHECK(base.get_int("s.a", 0) == 1);
  CHECK(base.get_int("s.b", 0) == 3);
  CHECK(base.get_int("s.c", 0) == 4);
}

TEST_CASE("config rejects malformed input and bad numbers") {
  CHECK_THROWS_AS(Config::parse("[oops\nx = 1\n"), Error);
  CHECK_THROWS_AS(Config::parse("just a line\n"), Error);
  Config c = Config::parse("x = abc\n");
  CHECK_THROWS_AS(c.get_double("x", 0), Error);
}

TEST_CASE("manifest text lists stage, config and hashes") {
  Manifest m;
  m.stage = "gen-demos";
  m.config.set("run.seed", "7");
  m.inputs.push_back({"task", "00ff"});
  m.outputs.push_back({"dataset", "abcd"});
  std::string t = m.to_text();
  CHECK(t.find("stage = gen-demos") != std::string::npos);
  CHECK(t.find("seed = 7") != std::string::npos);
  CHECK(t.find("dataset = abcd") != std::string::npos);
  // manifest text parses back as a config (reruns take it via --config)
  Config back = Config::parse(t);
  CHECK(back.get_int("run.seed", 0) == 7);
}
