#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cabo/optimizer.hpp"

namespace cabo {

inline constexpr int kSchemaVersion = 1;

struct UtilityWeights {
  double performance = 0.5;
  double preference = 0.5;

  void validate(const std::string& path = "utility_weights") const;
};

enum class PerformanceDirection { maximize, minimize };

struct SessionSettings {
  RunConfig run;
  UtilityWeights weights;
  PerformanceDirection direction = PerformanceDirection::maximize;
};

// Parses a create-session body. Throws ValidationError with a field path.
SessionSettings session_settings_from_json(const nlohmann::json& body);
nlohmann::json to_json(const SessionSettings& settings);

// Joystick space and cost table used by the user-study workflow.
nlohmann::json joystick_template();

enum class SessionState { awaiting_proposal, awaiting_rating, finished };
std::string_view to_string(SessionState s);

// Running min-max normalization of a raw performance score against every
// score observed so far (including `score`). 0.5 when all scores are equal.
double normalize_performance(const std::vector<double>& history, double score, PerformanceDirection dir);

struct SessionEvent {
  int seq = 0;
  std::string timestamp;
  std::string session_id;
  std::string kind;  // created | proposed | observed | costs_reweighted | finished
  nlohmann::json payload;
};

nlohmann::json to_json(const SessionEvent& e);
SessionEvent session_event_from_json(const nlohmann::json& j);

nlohmann::json proposal_to_json(const DesignSpace& space, const Proposal& p);
Proposal proposal_from_json(const DesignSpace& space, const nlohmann::json& j);

// One human-in-the-loop optimization session. Every state change is an
// event; apply() is the only mutator, so replaying the log rebuilds the
// session exactly. Not thread-safe; SessionManager serializes access.
class Session {
 public:
  Session(std::string id, SessionSettings settings);

  const std::string& id() const { return id_; }
  SessionState state() const { return state_; }
  const std::string& finish_reason() const { return finish_reason_; }
  const SessionSettings& settings() const { return settings_; }
  const Optimizer& optimizer() const { return opt_; }
  const std::optional<Proposal>& pending() const { return pending_; }
  const std::vector<SessionEvent>& events() const { return events_; }

  // Each returns the events it produced (already applied).
  std::vector<SessionEvent> propose();
  std::vector<SessionEvent> observe(double performance, double preference);
  std::vector<SessionEvent> reweight(const nlohmann::json& levels);
  std::vector<SessionEvent> finish(const std::string& reason);

  void apply(const SessionEvent& e);

  nlohmann::json proposal_response() const;
  nlohmann::json observe_response() const;
  nlohmann::json history() const;

  static std::unique_ptr<Session> create(std::string id, SessionSettings settings, const nlohmann::json& body);
  static std::unique_ptr<Session> replay(const std::vector<SessionEvent>& events);

 private:
  SessionEvent make_event(std::string kind, nlohmann::json payload) const;
  std::vector<SessionEvent> emit(std::string kind, nlohmann::json payload);
  void check_active(const char* op) const;
  std::optional<std::string> stop_reason_after_observe() const;

  std::string id_;
  SessionSettings settings_;
  Optimizer opt_;
  SessionState state_ = SessionState::awaiting_proposal;
  std::string finish_reason_;
  std::optional<Proposal> pending_;
  std::vector<double> performance_;
  std::vector<double> preference_;
  std::vector<double> utility_;
  std::vector<SessionEvent> events_;
};

// Append-only JSONL event file per session under a data directory.
class EventStore {
 public:
  explicit EventStore(std::filesystem::path dir);
  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path path_for(const std::string& session_id) const;
  void append(const std::vector<SessionEvent>& events) const;
  std::vector<SessionEvent> load(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;

 private:
  std::filesystem::path dir_;
};

class SessionManager {
 public:
  explicit SessionManager(std::filesystem::path data_dir);

  // Replays every event log in the data directory. Returns the number of
  // sessions recovered; unreadable logs are skipped and reported.
  int recover(std::vector<std::string>* problems = nullptr);

  nlohmann::json create(const nlohmann::json& body);
  nlohmann::json propose(const std::string& id);
  nlohmann::json observe(const std::string& id, const nlohmann::json& body);
  nlohmann::json reweight(const std::string& id, const nlohmann::json& body);
  nlohmann::json finish(const std::string& id);
  nlohmann::json history(const std::string& id);
  nlohmann::json list();

 private:
  struct Entry {
    std::mutex mutex;
    std::unique_ptr<Session> session;
  };
  std::shared_ptr<Entry> find(const std::string& id);

  EventStore store_;
  std::mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "cabo-data";
  std::optional<std::filesystem::path> ui_dir;
};

// HTTP front end. start() binds (port 0 picks a free port) and serves on a
// background thread.
class Server {
 public:
  explicit Server(ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  int start();
  void stop();
  void wait();  // blocks until stopped
  int port() const { return port_; }
  SessionManager& manager() { return *manager_; }

 private:
  struct Impl;
  ServerOptions options_;
  std::unique_ptr<SessionManager> manager_;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

// Blocking entry point for the CLI.
int serve(const ServerOptions& options);

}  // namespace cabo
