// End-to-end session flow over HTTP with a scripted rater.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "cabo/service.hpp"

// after Eigen: resolv.h (pulled in by httplib) defines a macro `_res`
#include <httplib.h>

using nlohmann::json;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cabo_http_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  return p;
}

struct Client {
  httplib::Client http;
  explicit Client(int port) : http("127.0.0.1", port) { http.set_read_timeout(120, 0); }

  std::pair<int, json> post(const std::string& path, const json& body = json::object()) {
    auto r = http.Post(path, body.dump(), "application/json");
    REQUIRE(r);
    return {r->status, r->body.empty() ? json() : json::parse(r->body)};
  }
  std::pair<int, json> get(const std::string& path) {
    auto r = http.Get(path);
    REQUIRE(r);
    return {r->status, json::parse(r->body)};
  }
};

// Stand-in for the human: task time is shortest near a mid-length shaft and
// a flat, wide topper; comfort follows the same shape.
std::pair<double, double> rate(const json& config) {
  const double shaft = config["shaft_length"], convex = config["topper_convexity"], width = config["topper_width"];
  const double sens = config["sensitivity"], react = config["reactivity"];
  const double seconds = 1.0 + std::pow((shaft - 12) / 9, 2) + convex * convex + std::pow((width - 24) / 10, 2) +
                         std::pow(sens - 0.6, 2) + 0.5 * std::pow(react - 0.3, 2);
  const double comfort = std::clamp(100.0 - 40.0 * (seconds - 1.0), 0.0, 100.0);
  return {seconds, comfort};
}

}  // namespace

TEST_CASE("health, template and static files") {
  const auto dir = temp_dir("static");
  const auto ui = dir / "ui";
  std::filesystem::create_directories(ui);
  std::ofstream(ui / "index.html") << "<html>cabo</html>";
  cabo::Server server({.host = "127.0.0.1", .port = 0, .data_dir = dir / "data", .ui_dir = ui});
  Client c(server.start());
  CHECK(c.get("/healthz").second["status"] == "ok");
  const auto [status, tmpl] = c.get("/templates/joystick");
  CHECK(status == 200);
  CHECK(tmpl["schedule"]["base"]["topper"]["create"] == 1000);
  auto page = c.http.Get("/index.html");
  REQUIRE(page);
  CHECK(page->body == "<html>cabo</html>");
  server.stop();
  std::filesystem::remove_all(dir);
}

TEST_CASE("error statuses") {
  const auto dir = temp_dir("errors");
  cabo::Server server({.host = "127.0.0.1", .port = 0, .data_dir = dir});
  Client c(server.start());

  auto body = cabo::joystick_template();
  body["utility_weights"] = {{"performance", 0.6}, {"preference", 0.6}};
  auto [s1, e1] = c.post("/sessions", body);
  CHECK(s1 == 400);
  CHECK(e1["field"].get<std::string>().rfind("utility_weights", 0) == 0);

  auto r = c.http.Post("/sessions", "{not json", "application/json");
  REQUIRE(r);
  CHECK(r->status == 400);

  CHECK(c.post("/sessions/nosuch/propose").first == 404);
  CHECK(c.get("/sessions/nosuch/history").first == 404);

  const std::string id = c.post("/sessions", cabo::joystick_template()).second["session_id"];
  CHECK(c.post("/sessions/" + id + "/observe", {{"performance_score", 1}, {"preference_score", 50}}).first == 409);
  CHECK(c.post("/sessions/" + id + "/propose").first == 200);
  CHECK(c.post("/sessions/" + id + "/propose").first == 409);
  auto [s2, e2] = c.post("/sessions/" + id + "/observe", {{"performance_score", 1}, {"preference_score", 150}});
  CHECK(s2 == 400);
  CHECK(e2["field"] == "preference_score");
  CHECK(c.post("/sessions/" + id + "/costs", {{"levels", {{"shaft", {{"create", -3}}}}}}).first == 400);
  CHECK(c.post("/sessions/" + id + "/finish").first == 200);
  CHECK(c.post("/sessions/" + id + "/costs", {{"levels", json::object()}}).first == 409);
  server.stop();
  std::filesystem::remove_all(dir);
}

TEST_CASE("scripted rater drives a budgeted session to completion") {
  const auto dir = temp_dir("flow");
  auto body = cabo::joystick_template();
  body["seed"] = 7;
  const double budget = 8000;
  body["stop"] = {{"max_budget", budget}, {"max_iterations", 40}};

  std::string id;
  json history_before;
  {
    cabo::Server server({.host = "127.0.0.1", .port = 0, .data_dir = dir});
    Client c(server.start());
    auto [status, created] = c.post("/sessions", body);
    REQUIRE(status == 201);
    id = created["session_id"];
    CHECK(c.get("/sessions/" + id + "/history").second["trace"].empty());

    int observes = 0;
    bool reweighted = false;
    for (int guard = 0; guard < 100; ++guard) {
      auto [ps, proposal] = c.post("/sessions/" + id + "/propose");
      REQUIRE(ps == 200);
      if (proposal["state"] == "finished") break;
      CHECK(proposal["state"] == "awaiting_rating");
      CHECK(proposal["units"] == "minutes");
      if (observes < 3) CHECK(proposal["phase"] == "init");
      for (const auto& [g, cls] : proposal["classes"].items())
        CHECK((cls == "tweak" || cls == "swap" || cls == "create"));
      const auto [seconds, comfort] = rate(proposal["configuration"]);
      auto [os, observed] =
          c.post("/sessions/" + id + "/observe", {{"performance_score", seconds}, {"preference_score", comfort}});
      REQUIRE(os == 200);
      ++observes;
      CHECK(c.get("/sessions/" + id + "/history").second["trace"].size() == static_cast<std::size_t>(observes));
      if (observed["state"] == "finished") break;
      if (observes == 8 && !reweighted) {
        auto [cs, ack] = c.post("/sessions/" + id + "/costs", {{"levels", {{"topper", {{"create", 10000}}}}}});
        CHECK(cs == 200);
        CHECK(ack["levels"]["topper"]["create"] == 10000);
        reweighted = true;
      }
    }
    const auto hist = c.get("/sessions/" + id + "/history").second;
    CHECK(hist["state"] == "finished");
    CHECK(hist["finish_reason"] == "budget_exhausted");
    CHECK(hist["cumulative_true_cost"].get<double>() <= budget);
    double best = -INFINITY, paid = 0.0;
    for (const auto& s : hist["trace"]) {
      CHECK(s["best_so_far"].get<double>() >= best);
      best = s["best_so_far"];
      paid += s["true_cost_paid"].get<double>();
    }
    CHECK(paid == doctest::Approx(hist["cumulative_true_cost"].get<double>()).epsilon(1e-12));
    CHECK(observes >= 4);
    history_before = hist;
    server.stop();
  }

  // restart on the same data directory
  cabo::Server again({.host = "127.0.0.1", .port = 0, .data_dir = dir});
  Client c(again.start());
  const auto hist = c.get("/sessions/" + id + "/history").second;
  CHECK(hist.dump() == history_before.dump());
  const auto list = c.get("/sessions").second;
  CHECK(list["sessions"].size() == 1);
  again.stop();
  std::filesystem::remove_all(dir);
}

TEST_CASE("concurrent proposals on one session never double-propose") {
  const auto dir = temp_dir("race");
  cabo::Server server({.host = "127.0.0.1", .port = 0, .data_dir = dir});
  const int port = server.start();
  Client setup(port);
  const std::string id = setup.post("/sessions", cabo::joystick_template()).second["session_id"];
  std::vector<int> statuses(8);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i)
    threads.emplace_back([&, i] {
      httplib::Client cl("127.0.0.1", port);
      auto r = cl.Post("/sessions/" + id + "/propose", "", "application/json");
      statuses[i] = r ? r->status : -1;
    });
  for (auto& t : threads) t.join();
  CHECK(std::count(statuses.begin(), statuses.end(), 200) == 1);
  CHECK(std::count(statuses.begin(), statuses.end(), 409) == 7);
  server.stop();
  std::filesystem::remove_all(dir);
}
