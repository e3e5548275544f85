#include "cabo/service.hpp"

#include <algorithm>
#include <chrono>
#include <climits>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "cabo/errors.hpp"

namespace cabo {

using nlohmann::json;

namespace {

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::time_point_cast<std::chrono::seconds>(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now - secs).count();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
  return os.str();
}

std::string random_id() {
  static std::mutex m;
  static std::random_device rd;
  static std::mt19937_64 rng((static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^
                             static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()));
  std::lock_guard lock(m);
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(16) << rng() << std::setw(16) << rng();
  return os.str();
}

double number_at(const json& j, const char* key, const std::string& path) {
  const auto it = j.find(key);
  if (it == j.end()) throw ValidationError(path + "." + key, "missing field");
  if (!it->is_number()) throw ValidationError(path + "." + key, "expected a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw ValidationError(path + "." + key, "must be finite");
  return v;
}

// Configuration values by parameter name, without bounds checks (stored
// proposals are trusted event data).
Configuration values_from_json(const DesignSpace& space, const json& j) {
  std::vector<double> v(space.dimension());
  for (std::size_t i = 0; i < space.dimension(); ++i) v[i] = j.at(space.parameters()[i].name).get<double>();
  return Configuration(std::move(v));
}

CostBreakdown breakdown_from_json(const DesignSpace& space, const json& j) {
  CostBreakdown b;
  for (const auto& g : space.groups()) {
    b.per_group_class.push_back(cost_class_from_string(j.at("classes").at(g.name).get<std::string>()));
    b.per_group_cost.push_back(j.at("costs").at(g.name).get<double>());
  }
  b.total = j.at("total").get<double>();
  return b;
}

}  // namespace

// ---------------------------------------------------------------------------
// Settings

void UtilityWeights::validate(const std::string& path) const {
  if (!(performance >= 0.0 && performance <= 1.0)) throw ValidationError(path + ".performance", "must be in [0, 1]");
  if (!(preference >= 0.0 && preference <= 1.0)) throw ValidationError(path + ".preference", "must be in [0, 1]");
  if (std::abs(performance + preference - 1.0) > 1e-9) throw ValidationError(path, "weights must sum to 1");
}

SessionSettings session_settings_from_json(const json& body) {
  if (!body.is_object()) throw ValidationError("body", "expected a JSON object");
  if (auto it = body.find("schema_version"); it != body.end() && *it != kSchemaVersion)
    throw ValidationError("schema_version", "unsupported version");
  if (!body.contains("space")) throw ValidationError("space", "missing field");
  DesignSpace space = [&] {
    try {
      return design_space_from_json(body["space"], "space");
    } catch (const ValidationError&) {
      throw;
    } catch (const Error& e) {
      throw ValidationError("space", e.what());
    }
  }();

  RunConfig run{.space = space};
  if (auto it = body.find("schedule"); it != body.end()) {
    run.schedule = cost_schedule_from_json(*it, "schedule");
  } else if (auto lv = body.find("levels"); lv != body.end()) {
    run.schedule.base = cost_levels_from_json(*lv, "levels");
  } else {
    throw ValidationError("schedule", "missing field (or give 'levels')");
  }
  for (const auto& g : space.groups())
    if (!run.schedule.base.per_group.count(g.name))
      throw ValidationError("schedule.base." + g.name, "missing levels for group");
  for (const auto& [name, l] : run.schedule.base.per_group) {
    (void)l;
    bool known = false;
    for (const auto& g : space.groups()) known |= g.name == name;
    if (!known) throw ValidationError("schedule.base." + name, "unknown group");
  }
  if (auto it = body.find("relaxation"); it != body.end()) run.relax = relaxation_from_json(*it, "relaxation");
  if (auto it = body.find("acquisition"); it != body.end()) run.acquisition = acquisition_spec_from_json(*it, "acquisition");
  if (auto it = body.find("init_samples"); it != body.end()) {
    if (!it->is_number_integer() || it->get<int>() < 1) throw ValidationError("init_samples", "must be a positive integer");
    run.init_samples = it->get<int>();
  }
  if (auto it = body.find("stop"); it != body.end() && !it->is_null()) {
    if (!it->is_object()) throw ValidationError("stop", "expected an object");
    if (auto m = it->find("max_iterations"); m != it->end() && !m->is_null()) {
      if (!m->is_number_integer() || m->get<int>() < 0)
        throw ValidationError("stop.max_iterations", "must be a non-negative integer");
      run.stop.max_iterations = m->get<int>();
    }
    if (auto b = it->find("max_budget"); b != it->end() && !b->is_null()) {
      if (!b->is_number() || !(b->get<double>() > 0.0)) throw ValidationError("stop.max_budget", "must be positive");
      run.stop.max_budget = b->get<double>();
    }
  }
  if (!run.stop.max_iterations && !run.stop.max_budget) run.stop.max_iterations = INT_MAX;
  if (auto it = body.find("seed"); it != body.end()) {
    if (!it->is_number_integer()) throw ValidationError("seed", "expected an integer");
    run.seed = it->get<std::uint64_t>();
  } else {
    run.seed = std::random_device{}();
  }

  SessionSettings s{.run = std::move(run)};
  if (auto it = body.find("utility_weights"); it != body.end()) {
    if (!it->is_object()) throw ValidationError("utility_weights", "expected an object");
    s.weights.performance = number_at(*it, "performance", "utility_weights");
    s.weights.preference = number_at(*it, "preference", "utility_weights");
  }
  s.weights.validate();
  if (auto it = body.find("performance_direction"); it != body.end()) {
    const std::string d = it->is_string() ? it->get<std::string>() : "";
    if (d == "maximize") s.direction = PerformanceDirection::maximize;
    else if (d == "minimize") s.direction = PerformanceDirection::minimize;
    else throw ValidationError("performance_direction", "must be 'maximize' or 'minimize'");
  }
  try {
    s.run.validate();
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError("schedule", e.what());
  }
  return s;
}

json to_json(const SessionSettings& s) {
  json stop = json::object();
  if (s.run.stop.max_iterations && *s.run.stop.max_iterations != INT_MAX) stop["max_iterations"] = *s.run.stop.max_iterations;
  if (s.run.stop.max_budget) stop["max_budget"] = *s.run.stop.max_budget;
  return {{"schema_version", kSchemaVersion},
          {"space", to_json(s.run.space)},
          {"schedule", to_json(s.run.schedule)},
          {"relaxation", to_json(s.run.relax)},
          {"acquisition", to_json(s.run.acquisition)},
          {"init_samples", s.run.init_samples},
          {"stop", stop},
          {"seed", s.run.seed},
          {"utility_weights", {{"performance", s.weights.performance}, {"preference", s.weights.preference}}},
          {"performance_direction", s.direction == PerformanceDirection::maximize ? "maximize" : "minimize"}};
}

json joystick_template() {
  return json::parse(R"({
  "schema_version": 1,
  "space": {
    "schema_version": 1,
    "parameters": [
      {"name": "shaft_length", "lower": 3, "upper": 21, "snap_step": 3},
      {"name": "topper_convexity", "lower": -0.66, "upper": 0.66, "snap_step": 0.165},
      {"name": "topper_width", "lower": 10, "upper": 30, "snap_step": 2},
      {"name": "sensitivity", "lower": 0, "upper": 1, "snap_step": 0.05},
      {"name": "reactivity", "lower": 0, "upper": 1, "snap_step": 0.05}
    ],
    "groups": [
      {"name": "shaft", "parameters": ["shaft_length"], "kind": "hardware"},
      {"name": "topper", "parameters": ["topper_convexity", "topper_width"], "kind": "hardware"},
      {"name": "sensitivity", "parameters": ["sensitivity"], "kind": "software"},
      {"name": "reactivity", "parameters": ["reactivity"], "kind": "software"}
    ]
  },
  "schedule": {
    "schema_version": 1,
    "units": "minutes",
    "base": {
      "shaft": {"tweak": 1, "swap": 10, "create": 100},
      "topper": {"tweak": 1, "swap": 10, "create": 1000},
      "sensitivity": {"tweak": 1, "swap": 10, "create": 10},
      "reactivity": {"tweak": 1, "swap": 10, "create": 10}
    }
  },
  "utility_weights": {"performance": 0.5, "preference": 0.5},
  "performance_direction": "minimize",
  "init_samples": 3,
  "stop": {"max_iterations": 15}
})");
}

std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::awaiting_proposal:
      return "awaiting_proposal";
    case SessionState::awaiting_rating:
      return "awaiting_rating";
    case SessionState::finished:
      return "finished";
  }
  return "awaiting_proposal";
}

double normalize_performance(const std::vector<double>& history, double score, PerformanceDirection dir) {
  double lo = score, hi = score;
  for (double v : history) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) return 0.5;
  const double t = (score - lo) / (hi - lo);
  return dir == PerformanceDirection::maximize ? t : 1.0 - t;
}

// ---------------------------------------------------------------------------
// Events

json to_json(const SessionEvent& e) {
  return {{"schema_version", kSchemaVersion}, {"seq", e.seq},   {"timestamp", e.timestamp},
          {"session_id", e.session_id},       {"kind", e.kind}, {"payload", e.payload}};
}

SessionEvent session_event_from_json(const json& j) {
  if (j.value("schema_version", 0) != kSchemaVersion) throw DataError("event has unsupported schema_version");
  SessionEvent e;
  e.seq = j.at("seq").get<int>();
  e.timestamp = j.at("timestamp").get<std::string>();
  e.session_id = j.at("session_id").get<std::string>();
  e.kind = j.at("kind").get<std::string>();
  e.payload = j.at("payload");
  return e;
}

json proposal_to_json(const DesignSpace& space, const Proposal& p) {
  json j = {{"iteration", p.iteration},
            {"phase", p.initial ? "init" : "loop"},
            {"proposed", to_json(space, p.proposed)},
            {"realized", to_json(space, p.realized)},
            {"believed", to_json(space, p.believed)},
            {"truth", to_json(space, p.truth)},
            {"acquisition_value", p.acquisition_value}};
  if (p.gp) j["gp"] = {{"amplitude", p.gp->amplitude}, {"noise", p.gp->noise}, {"lengthscales", p.gp->lengthscales}};
  return j;
}

Proposal proposal_from_json(const DesignSpace& space, const json& j) {
  Proposal p;
  p.iteration = j.at("iteration").get<int>();
  p.initial = j.at("phase").get<std::string>() == "init";
  p.proposed = values_from_json(space, j.at("proposed"));
  p.realized = values_from_json(space, j.at("realized"));
  p.believed = breakdown_from_json(space, j.at("believed"));
  p.truth = breakdown_from_json(space, j.at("truth"));
  p.acquisition_value = j.at("acquisition_value").get<double>();
  if (j.contains("gp")) {
    GPSnapshot g;
    g.amplitude = j["gp"].at("amplitude").get<double>();
    g.noise = j["gp"].at("noise").get<double>();
    g.lengthscales = j["gp"].at("lengthscales").get<std::vector<double>>();
    p.gp = std::move(g);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Session

Session::Session(std::string id, SessionSettings settings)
    : id_(std::move(id)), settings_(std::move(settings)), opt_(settings_.run) {}

std::unique_ptr<Session> Session::create(std::string id, SessionSettings settings, const json& body) {
  (void)body;
  auto s = std::make_unique<Session>(std::move(id), std::move(settings));
  s->emit("created", to_json(s->settings_));
  return s;
}

std::unique_ptr<Session> Session::replay(const std::vector<SessionEvent>& events) {
  if (events.empty() || events.front().kind != "created") throw DataError("event log does not start with 'created'");
  const SessionEvent& first = events.front();
  auto s = std::make_unique<Session>(first.session_id, session_settings_from_json(first.payload));
  for (const auto& e : events) {
    if (e.session_id != first.session_id) throw DataError("event log mixes session ids");
    s->apply(e);
  }
  return s;
}

SessionEvent Session::make_event(std::string kind, json payload) const {
  SessionEvent e;
  e.seq = static_cast<int>(events_.size());
  e.timestamp = now_iso8601();
  e.session_id = id_;
  e.kind = std::move(kind);
  e.payload = std::move(payload);
  return e;
}

std::vector<SessionEvent> Session::emit(std::string kind, json payload) {
  SessionEvent e = make_event(std::move(kind), std::move(payload));
  apply(e);
  return {e};
}

void Session::apply(const SessionEvent& e) {
  if (e.seq != static_cast<int>(events_.size()))
    throw DataError("event seq " + std::to_string(e.seq) + " out of order (expected " +
                    std::to_string(events_.size()) + ")");
  const DesignSpace& space = settings_.run.space;
  if (e.kind == "created") {
    if (!events_.empty()) throw DataError("duplicate 'created' event");
  } else if (e.kind == "proposed") {
    pending_ = proposal_from_json(space, e.payload);
    state_ = SessionState::awaiting_rating;
  } else if (e.kind == "observed") {
    if (!pending_) throw DataError("'observed' without a pending proposal");
    performance_.push_back(e.payload.at("performance_score").get<double>());
    preference_.push_back(e.payload.at("preference_score").get<double>());
    utility_.push_back(e.payload.at("utility").get<double>());
    opt_.commit(*pending_, utility_.back());
    pending_.reset();
    state_ = SessionState::awaiting_proposal;
  } else if (e.kind == "costs_reweighted") {
    opt_.schedule().add_override(e.payload.at("from_iteration").get<int>(),
                                 cost_levels_from_json(e.payload.at("levels"), "levels"));
  } else if (e.kind == "finished") {
    state_ = SessionState::finished;
    finish_reason_ = e.payload.at("reason").get<std::string>();
    pending_.reset();
  } else {
    throw DataError("unknown event kind '" + e.kind + "'");
  }
  events_.push_back(e);
}

void Session::check_active(const char* op) const {
  if (state_ == SessionState::finished)
    throw StateConflictError(std::string(op) + ": session is finished (" + finish_reason_ + ")");
}

std::vector<SessionEvent> Session::propose() {
  check_active("propose");
  if (state_ != SessionState::awaiting_proposal)
    throw StateConflictError("propose: a proposal is awaiting its rating");
  if (opt_.iterations_exhausted()) return emit("finished", {{"reason", "max_iterations"}});
  const Proposal p = opt_.propose();
  if (!opt_.affordable(p)) return emit("finished", {{"reason", "budget_exhausted"}});
  return emit("proposed", proposal_to_json(settings_.run.space, p));
}

std::optional<std::string> Session::stop_reason_after_observe() const {
  if (opt_.iterations_exhausted()) return "max_iterations";
  if (const auto remaining = opt_.remaining_budget()) {
    const CostLevels next = effective_levels(settings_.run.schedule, opt_.next_iteration(), CostRole::truth);
    double cheapest = 0.0;
    for (const auto& g : settings_.run.space.groups()) cheapest += next.at(g.name).min();
    if (*remaining < cheapest) return "budget_exhausted";
  }
  return std::nullopt;
}

std::vector<SessionEvent> Session::observe(double performance, double preference) {
  check_active("observe");
  if (state_ != SessionState::awaiting_rating) throw StateConflictError("observe: no proposal is awaiting a rating");
  if (!std::isfinite(performance)) throw ValidationError("performance_score", "must be a finite number");
  if (!(preference >= 0.0 && preference <= 100.0)) throw ValidationError("preference_score", "must be in [0, 100]");
  const double norm = normalize_performance(performance_, performance, settings_.direction);
  const double utility = settings_.weights.performance * norm + settings_.weights.preference * (preference / 100.0);
  std::vector<SessionEvent> out = emit("observed", {{"iteration", pending_->iteration},
                                                    {"performance_score", performance},
                                                    {"preference_score", preference},
                                                    {"normalized_performance", norm},
                                                    {"utility", utility}});
  if (auto reason = stop_reason_after_observe()) {
    auto fin = emit("finished", {{"reason", *reason}});
    out.insert(out.end(), fin.begin(), fin.end());
  }
  return out;
}

std::vector<SessionEvent> Session::reweight(const json& levels) {
  check_active("reweight");
  if (!levels.is_object()) throw ValidationError("levels", "expected an object keyed by group name");
  const int from = opt_.next_iteration() + (pending_ ? 1 : 0);
  CostLevels merged = effective_levels(settings_.run.schedule, from, CostRole::truth);
  for (const auto& [name, jl] : levels.items()) {
    const std::string path = "levels." + name;
    if (!merged.per_group.count(name)) throw ValidationError(path, "unknown group");
    if (!jl.is_object()) throw ValidationError(path, "expected {tweak, swap, create}");
    for (const auto& [key, v] : jl.items()) {
      CostClass c;
      try {
        c = cost_class_from_string(key);
      } catch (const Error&) {
        throw ValidationError(path + "." + key, "unknown cost class");
      }
      if (!v.is_number() || !std::isfinite(v.get<double>())) throw ValidationError(path + "." + key, "expected a number");
      if (v.get<double>() < 0.0) throw ValidationError(path + "." + key, "must be non-negative");
      merged.per_group[name][c] = v.get<double>();
    }
  }
  if (settings_.run.acquisition.mode == AcquisitionMode::cost_aware) {
    try {
      check_cost_aware_levels(settings_.run.space, merged);
    } catch (const ConfigurationError& e) {
      throw ValidationError("levels", e.what());
    }
  }
  return emit("costs_reweighted", {{"from_iteration", from}, {"levels", to_json(merged)}});
}

std::vector<SessionEvent> Session::finish(const std::string& reason) {
  check_active("finish");
  return emit("finished", {{"reason", reason}});
}

json Session::proposal_response() const {
  json out = {{"schema_version", kSchemaVersion}, {"session_id", id_}, {"state", to_string(state_)}};
  if (state_ == SessionState::finished) {
    out["finish_reason"] = finish_reason_;
    return out;
  }
  const DesignSpace& space = settings_.run.space;
  const Proposal& p = *pending_;
  json classes = json::object();
  for (std::size_t g = 0; g < space.group_count(); ++g)
    classes[space.groups()[g].name] = to_string(p.believed.per_group_class[g]);
  out["iteration"] = p.iteration;
  out["phase"] = p.initial ? "init" : "loop";
  out["proposed"] = to_json(space, p.proposed);
  out["configuration"] = to_json(space, p.realized);
  out["classes"] = classes;
  out["believed_cost"] = to_json(space, p.believed);
  out["acquisition_value"] = p.acquisition_value;
  out["units"] = settings_.run.schedule.units;
  return out;
}

json Session::observe_response() const {
  const auto& trace = opt_.trace();
  json out = {{"schema_version", kSchemaVersion},
              {"session_id", id_},
              {"state", to_string(state_)},
              {"evaluations", trace.steps.size()},
              {"cumulative_true_cost", trace.cumulative_cost()}};
  if (!trace.steps.empty()) {
    out["utility"] = utility_.back();
    out["best_so_far"] = trace.steps.back().best_so_far;
  }
  if (const auto r = opt_.remaining_budget()) out["remaining_budget"] = *r;
  if (state_ == SessionState::finished) out["finish_reason"] = finish_reason_;
  return out;
}

json Session::history() const {
  const DesignSpace& space = settings_.run.space;
  const auto& trace = opt_.trace();
  json steps = json::array();
  std::size_t best = 0;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    json s = to_json(space, trace.steps[i]);
    s["performance_score"] = performance_[i];
    s["preference_score"] = preference_[i];
    steps.push_back(std::move(s));
    if (trace.steps[i].observed_y > trace.steps[best].observed_y) best = i;
  }
  json out = {{"schema_version", kSchemaVersion},
              {"session_id", id_},
              {"state", to_string(state_)},
              {"settings", to_json(settings_)},
              {"effective_schedule", to_json(opt_.config().schedule)},
              {"trace", steps},
              {"record", to_json(space, opt_.record())},
              {"cumulative_true_cost", trace.cumulative_cost()},
              {"events", events_.size()}};
  out["finish_reason"] = state_ == SessionState::finished ? json(finish_reason_) : json(nullptr);
  if (const auto r = opt_.remaining_budget()) out["remaining_budget"] = *r;
  if (trace.steps.empty()) {
    out["best"] = nullptr;
  } else {
    out["best"] = {{"iteration", trace.steps[best].iteration},
                   {"configuration", to_json(space, trace.steps[best].realized)},
                   {"utility", trace.steps[best].observed_y}};
  }
  out["pending"] = pending_ ? proposal_to_json(space, *pending_) : json(nullptr);
  return out;
}

// ---------------------------------------------------------------------------
// Event store

EventStore::EventStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path EventStore::path_for(const std::string& session_id) const {
  return dir_ / ("session_" + session_id + ".jsonl");
}

void EventStore::append(const std::vector<SessionEvent>& events) const {
  if (events.empty()) return;
  std::ofstream out(path_for(events.front().session_id), std::ios::app);
  if (!out) throw DataError("cannot open event log for " + events.front().session_id);
  for (const auto& e : events) out << to_json(e).dump() << '\n';
  out.flush();
  if (!out) throw DataError("failed to write event log for " + events.front().session_id);
}

std::vector<SessionEvent> EventStore::load(const std::string& session_id) const {
  std::ifstream in(path_for(session_id));
  if (!in) throw NotFoundError("no event log for session " + session_id);
  std::vector<SessionEvent> events;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      events.push_back(session_event_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      // A torn final line from an interrupted write is dropped; anything
      // earlier is corruption.
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw DataError("event log " + session_id + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return events;
}

std::vector<std::string> EventStore::session_ids() const {
  std::vector<std::string> ids;
  for (const auto& e : std::filesystem::directory_iterator(dir_)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("session_", 0) == 0 && e.path().extension() == ".jsonl")
      ids.push_back(name.substr(8, name.size() - 8 - 6));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

// ---------------------------------------------------------------------------
// Manager

SessionManager::SessionManager(std::filesystem::path data_dir) : store_(std::move(data_dir)) {}

int SessionManager::recover(std::vector<std::string>* problems) {
  int n = 0;
  for (const auto& id : store_.session_ids()) {
    try {
      auto entry = std::make_shared<Entry>();
      entry->session = Session::replay(store_.load(id));
      std::lock_guard lock(map_mutex_);
      sessions_[id] = std::move(entry);
      ++n;
    } catch (const std::exception& e) {
      if (problems) problems->push_back(id + ": " + e.what());
    }
  }
  return n;
}

std::shared_ptr<SessionManager::Entry> SessionManager::find(const std::string& id) {
  std::lock_guard lock(map_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("session " + id + " not found");
  return it->second;
}

json SessionManager::create(const json& body) {
  SessionSettings settings = session_settings_from_json(body);
  std::string id;
  {
    std::lock_guard lock(map_mutex_);
    do id = random_id();
    while (sessions_.count(id));
  }
  auto entry = std::make_shared<Entry>();
  entry->session = Session::create(id, std::move(settings), body);
  store_.append(entry->session->events());
  json out = {{"schema_version", kSchemaVersion}, {"session_id", id}, {"state", to_string(entry->session->state())}};
  std::lock_guard lock(map_mutex_);
  sessions_[id] = std::move(entry);
  return out;
}

json SessionManager::propose(const std::string& id) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  auto draft = std::make_unique<Session>(*entry->session);
  store_.append(draft->propose());
  entry->session = std::move(draft);
  return entry->session->proposal_response();
}

json SessionManager::observe(const std::string& id, const json& body) {
  if (!body.is_object()) throw ValidationError("body", "expected a JSON object");
  const double perf = number_at(body, "performance_score", "body");
  const double pref = number_at(body, "preference_score", "body");
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  auto draft = std::make_unique<Session>(*entry->session);
  store_.append(draft->observe(perf, pref));
  entry->session = std::move(draft);
  return entry->session->observe_response();
}

json SessionManager::reweight(const std::string& id, const json& body) {
  if (!body.is_object() || !body.contains("levels")) throw ValidationError("levels", "missing field");
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  auto draft = std::make_unique<Session>(*entry->session);
  const auto events = draft->reweight(body["levels"]);
  store_.append(events);
  entry->session = std::move(draft);
  return {{"schema_version", kSchemaVersion},
          {"session_id", id},
          {"from_iteration", events.back().payload["from_iteration"]},
          {"levels", events.back().payload["levels"]}};
}

json SessionManager::finish(const std::string& id) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  auto draft = std::make_unique<Session>(*entry->session);
  store_.append(draft->finish("operator"));
  entry->session = std::move(draft);
  return {{"schema_version", kSchemaVersion}, {"session_id", id}, {"state", "finished"}, {"finish_reason", "operator"}};
}

json SessionManager::history(const std::string& id) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  return entry->session->history();
}

json SessionManager::list() {
  std::vector<std::shared_ptr<Entry>> entries;
  {
    std::lock_guard lock(map_mutex_);
    for (const auto& [id, e] : sessions_) entries.push_back(e);
  }
  json out = json::array();
  for (const auto& e : entries) {
    std::lock_guard lock(e->mutex);
    const Session& s = *e->session;
    out.push_back({{"session_id", s.id()},
                   {"state", to_string(s.state())},
                   {"evaluations", s.optimizer().trace().steps.size()},
                   {"cumulative_true_cost", s.optimizer().trace().cumulative_cost()}});
  }
  return {{"schema_version", kSchemaVersion}, {"sessions", out}};
}

// ---------------------------------------------------------------------------
// HTTP

struct Server::Impl {
  httplib::Server http;
  std::thread thread;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message,
                const std::string& field = "") {
  json body = {{"schema_version", kSchemaVersion}, {"error", kind}, {"message", message}};
  if (!field.empty()) body["field"] = field;
  send_json(res, status, body);
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    send_error(res, 400, "validation", e.what(), e.field());
  } catch (const json::exception& e) {
    send_error(res, 400, "validation", std::string("malformed JSON: ") + e.what());
  } catch (const NotFoundError& e) {
    send_error(res, 404, "not_found", e.what());
  } catch (const StateConflictError& e) {
    send_error(res, 409, "state_conflict", e.what());
  } catch (const ConfigurationError& e) {
    send_error(res, 400, "validation", e.what());
  } catch (const BoundsError& e) {
    send_error(res, 400, "validation", e.what(), e.parameter());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return json::parse(req.body);
}

}  // namespace

Server::Server(ServerOptions options)
    : options_(std::move(options)),
      manager_(std::make_unique<SessionManager>(options_.data_dir)),
      impl_(std::make_unique<Impl>()) {
  std::vector<std::string> problems;
  manager_->recover(&problems);
  for (const auto& p : problems) std::cerr << "warning: could not recover session " << p << '\n';

  auto& http = impl_->http;
  SessionManager& m = *manager_;

  http.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}, {"schema_version", kSchemaVersion}});
  });
  http.Get("/templates/joystick", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, joystick_template());
  });
  http.Get("/sessions", [&m](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, m.list()); });
  });
  http.Post("/sessions", [&m](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 201, m.create(parse_body(req))); });
  });
  http.Post(R"(/sessions/([0-9a-zA-Z_-]+)/propose)", [&m](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, m.propose(req.matches[1])); });
  });
  http.Post(R"(/sessions/([0-9a-zA-Z_-]+)/observe)", [&m](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, m.observe(req.matches[1], parse_body(req))); });
  });
  http.Post(R"(/sessions/([0-9a-zA-Z_-]+)/costs)", [&m](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, m.reweight(req.matches[1], parse_body(req))); });
  });
  http.Post(R"(/sessions/([0-9a-zA-Z_-]+)/finish)", [&m](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, m.finish(req.matches[1])); });
  });
  http.Get(R"(/sessions/([0-9a-zA-Z_-]+)/history)", [&m](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, m.history(req.matches[1])); });
  });
  if (options_.ui_dir && !http.set_mount_point("/", options_.ui_dir->string()))
    throw ConfigurationError("ui directory '" + options_.ui_dir->string() + "' does not exist");
}

Server::~Server() { stop(); }

int Server::start() {
  auto& http = impl_->http;
  if (options_.port == 0) {
    port_ = http.bind_to_any_port(options_.host);
  } else {
    port_ = http.bind_to_port(options_.host, options_.port) ? options_.port : -1;
  }
  if (port_ < 0) throw ConfigurationError("cannot bind " + options_.host + ":" + std::to_string(options_.port));
  impl_->thread = std::thread([&http] { http.listen_after_bind(); });
  http.wait_until_ready();
  return port_;
}

void Server::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void Server::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

int serve(const ServerOptions& options) {
  Server server(options);
  const int port = server.start();
  std::cout << "listening on http://" << options.host << ':' << port << " (data: " << options.data_dir.string() << ")"
            << std::endl;
  server.wait();
  return 0;
}

}  // namespace cabo
