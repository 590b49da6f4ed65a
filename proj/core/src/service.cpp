#include "grlhf/service.hpp"

#include <algorithm>
#include <chrono>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "grlhf/error.hpp"

namespace grlhf {

using nlohmann::json;

struct Service::Snapshot {
  std::string id;
  Session session;
  std::vector<std::pair<BehaviorId, BehaviorId>> suggestions;  // live suggestion edges of the round
};

namespace {

constexpr const char* kPrefix = "/api/v1";

ApiResponse reply(int status, const json& body) { return {status, body.dump(), "application/json", {}}; }

ApiResponse error_reply(int status, const std::string& message) { return reply(status, json{{"error", message}}); }

ApiResponse no_content() { return {204, "", "application/json", {}}; }

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    const std::size_t j = path.find('/', i);
    const std::size_t end = j == std::string::npos ? path.size() : j;
    if (end > i) parts.push_back(path.substr(i, end - i));
    i = end;
  }
  return parts;
}

std::optional<BehaviorId> parse_id(const std::string& s) {
  if (s.empty() || s.size() > 18) return std::nullopt;
  if (!std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
  return static_cast<BehaviorId>(std::stoll(s));
}

std::vector<BehaviorId> id_list(const json& j, const char* field) {
  if (!j.contains(field) || !j[field].is_array()) throw UsageError(std::string("field '") + field + "' must be an array");
  std::vector<BehaviorId> ids;
  for (const auto& v : j[field]) {
    if (!v.is_number_integer()) throw UsageError(std::string("field '") + field + "' must hold integer ids");
    ids.push_back(v.get<BehaviorId>());
  }
  return ids;
}

json round_metrics_view(const RoundMetrics& m) {
  // Evaluation returns stay on the server; the client only sees counts.
  return {{"round_index", m.round_index},
          {"comparisons", m.comparisons},
          {"total_comparisons", m.total_comparisons},
          {"total_queries", m.total_queries},
          {"reward_retrained", m.reward_retrained},
          {"policy_trained", m.policy_trained}};
}

json comparison_view(const GroupComparison& c) {
  return {{"id", c.id},
          {"round", c.round_index},
          {"g1", c.group_1},
          {"g2", c.group_2},
          {"verdict", std::string(to_string(c.verdict))},
          {"origin", std::string(to_string(c.origin))}};
}

std::vector<std::pair<BehaviorId, BehaviorId>> suggestion_edges(const std::vector<BehaviorId>& g1,
                                                                 const std::vector<BehaviorId>& g2) {
  const auto& big = g1.size() >= g2.size() ? g1 : g2;
  const auto& small = g1.size() >= g2.size() ? g2 : g1;
  std::vector<std::pair<BehaviorId, BehaviorId>> edges;
  for (std::size_t t = 0; t < big.size(); ++t) edges.emplace_back(big[t], small[t % small.size()]);
  return edges;
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

Service::Service(ServiceOptions options) : options_(std::move(options)) {}

Service::~Service() {
  if (worker_.joinable()) worker_.join();
}

void Service::wait_for_training() {
  std::lock_guard lock(command_mu_);
  if (worker_.joinable()) worker_.join();
}

std::shared_ptr<const Service::Snapshot> Service::current() const {
  std::lock_guard lock(snapshot_mu_);
  return snapshot_;
}

void Service::publish(std::shared_ptr<const Snapshot> s) {
  std::lock_guard lock(snapshot_mu_);
  snapshot_ = std::move(s);
}

void Service::persist(const Session& session) const {
  if (options_.session_dir) session.snapshot(*options_.session_dir);
}

void Service::resume(const std::filesystem::path& dir) {
  std::lock_guard lock(command_mu_);
  auto s = std::make_shared<Snapshot>(Snapshot{"session-" + std::to_string(++sessions_created_), Session::resume(dir), {}});
  publish(std::move(s));
}

ApiResponse Service::handle(const ApiRequest& request) {
  ApiResponse r;
  try {
    r = dispatch(request);
  } catch (const json::exception& e) {
    r = error_reply(400, std::string("malformed request: ") + e.what());
  } catch (const UsageError& e) {
    r = error_reply(422, e.what());
  } catch (const std::exception& e) {
    r = error_reply(500, e.what());
  }
  r.headers.emplace_back("Access-Control-Allow-Origin", options_.cors_origin);
  return r;
}

ApiResponse Service::dispatch(const ApiRequest& req) {
  const auto parts = split_path(req.path);
  if (parts.size() < 2 || parts[0] != "api" || parts[1] != "v1") return error_reply(404, "unknown route");
  if (req.method == "OPTIONS") {
    ApiResponse r = no_content();
    r.headers.emplace_back("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    r.headers.emplace_back("Access-Control-Allow-Headers", "Authorization, Content-Type, Idempotency-Key");
    return r;
  }
  if (parts.size() == 3 && parts[2] == "spec" && req.method == "GET") return reply(200, openapi_document());

  if (!options_.token.empty()) {
    const auto it = req.headers.find("authorization");
    if (it == req.headers.end() || it->second != "Bearer " + options_.token) {
      ApiResponse r = error_reply(401, "missing or invalid bearer token");
      r.headers.emplace_back("WWW-Authenticate", "Bearer");
      return r;
    }
  }
  if (parts.size() < 3 || parts[2] != "sessions") return error_reply(404, "unknown route");

  // Retries of a mutation with the same key get the first answer back.
  std::string idem_key;
  if (req.method == "POST") {
    const auto it = req.headers.find("idempotency-key");
    if (it != req.headers.end() && !it->second.empty()) {
      idem_key = req.path + "\n" + it->second;
      std::lock_guard lock(command_mu_);
      const auto cached = idempotent_.find(idem_key);
      if (cached != idempotent_.end()) return cached->second;
    }
  }
  auto remember = [&](ApiResponse r) {
    if (!idem_key.empty() && r.status < 500) {
      std::lock_guard lock(command_mu_);
      idempotent_.emplace(idem_key, r);
    }
    return r;
  };

  if (parts.size() == 3) {
    if (req.method != "POST") return error_reply(405, "method not allowed");
    return remember(create_session(req));
  }
  const auto snap = current();
  if (!snap || snap->id != parts[3]) return error_reply(404, "unknown session");
  const std::size_t n = parts.size();
  const std::string& method = req.method;

  if (n == 6 && parts[4] == "rounds" && parts[5] == "current" && method == "GET") return current_round(snap);
  if (n == 5 && parts[4] == "layout" && method == "GET") return layout(snap);
  if (n == 5 && parts[4] == "history" && method == "GET") return history(snap);
  if (n == 7 && parts[4] == "behaviors" && parts[6] == "frames" && method == "GET") return frames(snap, parts[5]);
  if (n == 5 && parts[4] == "suggestions" && method == "GET") return suggestions(req);
  if (n == 5 && parts[4] == "comparisons" && method == "POST") return remember(comparisons(req));
  if (n == 6 && parts[4] == "rounds" && parts[5] == "advance" && method == "POST") return remember(advance());
  if (n == 5 && parts[4] == "training" && method == "GET") return training();
  return error_reply(404, "unknown route");
}

ApiResponse Service::create_session(const ApiRequest& req) {
  std::lock_guard lock(command_mu_);
  if (current()) return error_reply(409, "a session is already active");
  const json body = req.body.empty() ? json::object() : json::parse(req.body);
  if (!body.is_object()) throw UsageError("request body must be an object");
  const json cfg = body.contains("config") ? body["config"] : body;
  SessionConfig config;
  try {
    config = session_config_from_json(cfg).resolved();
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad config: ") + e.what());
  }
  auto s = std::make_shared<Snapshot>(
      Snapshot{"session-" + std::to_string(++sessions_created_), Session::start(config), {}});
  persist(s->session);
  const std::string id = s->id;
  publish(std::move(s));
  return reply(201, json{{"session_id", id}});
}

ApiResponse Service::current_round(const std::shared_ptr<const Snapshot>& s) const {
  const Session& session = s->session;
  json ids = json::array();
  for (const auto& b : session.behaviors()) ids.push_back(b.id);
  json metrics = json::array();
  for (const auto& m : session.metrics()) metrics.push_back(round_metrics_view(m));
  const Phase phase = training_ ? Phase::Training : session.phase();
  return reply(200, json{{"session_id", s->id},
                         {"round_index", session.round_index()},
                         {"rounds", session.config().rounds},
                         {"phase", std::string(to_string(phase))},
                         {"env", std::string(to_string(session.config().env.name))},
                         {"segment_len", session.config().effective_segment_len()},
                         {"behavior_ids", std::move(ids)},
                         {"metrics_so_far", std::move(metrics)}});
}

ApiResponse Service::layout(const std::shared_ptr<const Snapshot>& s) const {
  json scene = to_json(s->session.scene(s->suggestions));
  json tree = json::array();
  for (const auto& node : s->session.dendrogram().nodes()) {
    if (!node.is_leaf()) tree.push_back({{"node", node.id}, {"children", node.children}});
  }
  scene["tree"] = std::move(tree);
  scene["root"] = s->session.dendrogram().root_id();
  scene["round_index"] = s->session.round_index();
  return reply(200, scene);
}

ApiResponse Service::history(const std::shared_ptr<const Snapshot>& s) const {
  json out = json::array();
  for (const auto& c : s->session.store().comparisons()) out.push_back(comparison_view(c));
  return reply(200, json{{"comparisons", std::move(out)}, {"total_queries", s->session.store().queries().size()}});
}

ApiResponse Service::frames(const std::shared_ptr<const Snapshot>& s, const std::string& bid) const {
  const auto id = parse_id(bid);
  if (!id) return error_reply(404, "unknown behavior");
  const Behavior* b = s->session.find_behavior(*id);
  if (!b) return error_reply(404, "unknown behavior");
  const auto& spec = s->session.config().env;
  json out = frames_to_json(spec, render_frames(spec, *b));
  out["behavior"] = *id;
  return reply(200, out);
}

ApiResponse Service::suggestions(const ApiRequest& req) {
  std::lock_guard lock(command_mu_);
  const auto snap = current();
  if (training_) return error_reply(409, "training in progress");
  if (snap->session.phase() != Phase::CollectingFeedback) return error_reply(409, "session is not collecting feedback");
  const auto it = req.query.find("mode");
  const std::string mode = it == req.query.end() ? "group" : it->second;
  auto next = std::make_shared<Snapshot>(*snap);
  json out;
  try {
    if (mode == "pair") {
      const auto [a, b] = snap->session.suggest_pair();
      out = {{"mode", "pair"}, {"behaviors", {a, b}}};
      next->suggestions = {{a, b}};
    } else if (mode == "group") {
      const GroupSuggestion g = snap->session.suggest_groups();
      out = {{"mode", "group"},
             {"node_1", g.node_1},
             {"node_2", g.node_2},
             {"g1", g.leaves_1},
             {"g2", g.leaves_2}};
      next->suggestions = suggestion_edges(g.leaves_1, g.leaves_2);
    } else {
      return error_reply(422, "mode must be 'group' or 'pair'");
    }
  } catch (const ExhaustedError&) {
    return no_content();
  }
  publish(std::move(next));
  return reply(200, out);
}

ApiResponse Service::comparisons(const ApiRequest& req) {
  std::lock_guard lock(command_mu_);
  const auto snap = current();
  if (training_) return error_reply(409, "training in progress");
  if (snap->session.phase() != Phase::CollectingFeedback) return error_reply(409, "session is not collecting feedback");
  const json body = json::parse(req.body);
  if (!body.is_object()) throw UsageError("request body must be an object");
  GroupComparison c;
  c.group_1 = id_list(body, "g1");
  c.group_2 = id_list(body, "g2");
  c.verdict = verdict_from_string(body.at("verdict").get<std::string>());
  c.origin = origin_from_string(body.value("origin", std::string("human")));
  if (c.origin == Origin::Dm) throw UsageError("origin 'dm' is reserved for simulated sessions");
  c.ts = now_ms();
  auto next = std::make_shared<Snapshot>(*snap);
  const auto queries = next->session.submit_comparison(std::move(c));
  next->suggestions.clear();
  const std::string id = next->session.store().comparisons().back().id;
  persist(next->session);
  publish(std::move(next));
  return reply(201, json{{"comparison_id", id}, {"queries_generated", queries.size()}});
}

ApiResponse Service::advance() {
  std::lock_guard lock(command_mu_);
  const auto snap = current();
  if (training_) return error_reply(409, "training in progress");
  if (snap->session.phase() != Phase::CollectingFeedback) return error_reply(409, "session is not collecting feedback");
  if (worker_.joinable()) worker_.join();
  training_ = true;
  progress_ = 0.0;
  {
    std::lock_guard status(status_mu_);
    stage_ = "queued";
    last_error_.clear();
  }
  worker_ = std::thread([this, snap] {
    auto next = std::make_shared<Snapshot>(Snapshot{snap->id, snap->session, {}});
    try {
      next->session.advance_round([this](std::string_view stage, double f) {
        {
          std::lock_guard status(status_mu_);
          stage_ = std::string(stage);
        }
        // Never report a smaller fraction within one training phase.
        double cur = progress_.load();
        while (f > cur && !progress_.compare_exchange_weak(cur, f)) {
        }
      });
      persist(next->session);
      publish(std::move(next));
      progress_ = 1.0;
    } catch (const std::exception& e) {
      std::lock_guard status(status_mu_);
      last_error_ = e.what();
    }
    training_ = false;
  });
  return reply(202, json{{"phase", "training"}, {"round_index", snap->session.round_index()}});
}

ApiResponse Service::training() const {
  const auto snap = current();
  json out;
  const bool busy = training_;
  out["phase"] = std::string(to_string(busy ? Phase::Training : snap->session.phase()));
  out["progress"] = busy ? progress_.load() : (snap->session.metrics().empty() ? 0.0 : 1.0);
  out["round_index"] = snap->session.round_index();
  std::lock_guard status(status_mu_);
  if (busy) out["stage"] = stage_;
  if (!last_error_.empty()) out["error"] = last_error_;
  return reply(200, out);
}

// ---------------------------------------------------------------------------

json openapi_document() {
  auto ref = [](const char* name) { return json{{"$ref", std::string("#/components/schemas/") + name}}; };
  auto json_body = [&](const char* schema) { return json{{"application/json", {{"schema", ref(schema)}}}}; };
  auto resp = [&](const char* description, const char* schema) {
    json r{{"description", description}};
    if (schema) r["content"] = json_body(schema);
    return r;
  };
  auto err = [&](const char* d) { return resp(d, "Error"); };
  const json ids{{"type", "array"}, {"items", {{"type", "integer"}}}};
  const json num{{"type", "number"}};
  const json integer{{"type", "integer"}};
  const json str{{"type", "string"}};
  const json boolean{{"type", "boolean"}};
  const json phase{{"type", "string"}, {"enum", {"collecting_feedback", "training", "idle", "finished"}}};
  auto object = [](json props, std::vector<std::string> required, bool closed = true) {
    json o{{"type", "object"}, {"properties", std::move(props)}};
    if (!required.empty()) o["required"] = std::move(required);
    if (closed) o["additionalProperties"] = false;
    return o;
  };

  json schemas;
  schemas["Error"] = object({{"error", str}}, {"error"});
  schemas["SessionCreated"] = object({{"session_id", str}}, {"session_id"});
  schemas["SessionConfig"] = json{{"type", "object"},
                                  {"description", "Session configuration; every field is optional."},
                                  {"properties",
                                   {{"env", {{"type", "string"}, {"enum", {"gridworld", "mountaincar"}}}},
                                    {"behaviors_per_round", integer},
                                    {"segment_len", integer},
                                    {"rounds", integer},
                                    {"seed", integer}}}};
  schemas["RoundMetrics"] = object({{"round_index", integer},
                                    {"comparisons", integer},
                                    {"total_comparisons", integer},
                                    {"total_queries", integer},
                                    {"reward_retrained", boolean},
                                    {"policy_trained", boolean}},
                                   {"round_index", "comparisons", "total_comparisons", "total_queries"});
  schemas["CurrentRound"] = object({{"session_id", str},
                                    {"round_index", integer},
                                    {"rounds", integer},
                                    {"phase", phase},
                                    {"env", str},
                                    {"segment_len", integer},
                                    {"behavior_ids", ids},
                                    {"metrics_so_far", {{"type", "array"}, {"items", ref("RoundMetrics")}}}},
                                   {"session_id", "round_index", "phase", "behavior_ids", "metrics_so_far"});
  schemas["Arc"] = object({{"node", integer},
                           {"ring", integer},
                           {"start", num},
                           {"end", num},
                           {"inner", num},
                           {"outer", num},
                           {"selectable", boolean},
                           {"behavior", integer}},
                          {"node", "ring", "start", "end", "inner", "outer", "selectable"});
  schemas["Edge"] = object(
      {{"a", integer},
       {"b", integer},
       {"kind", {{"type", "string"}, {"enum", {"suggestion", "history"}}}},
       {"control_points",
        {{"type", "array"}, {"items", {{"type", "array"}, {"items", num}, {"minItems", 2}, {"maxItems", 2}}}}},
       {"color", object({{"from", str}, {"to", str}}, {"from", "to"})},
       {"stroke", str}},
      {"a", "b", "kind", "control_points"});
  schemas["LayoutScene"] = object(
      {{"arcs", {{"type", "array"}, {"items", ref("Arc")}}},
       {"edges", {{"type", "array"}, {"items", ref("Edge")}}},
       {"leaf_angle",
        {{"type", "array"}, {"items", object({{"behavior", integer}, {"angle", num}}, {"behavior", "angle"})}}},
       {"params", object({{"hub_radius", num}, {"beta", num}}, {"hub_radius", "beta"})},
       {"tree",
        {{"type", "array"}, {"items", object({{"node", integer}, {"children", ids}}, {"node", "children"})}}},
       {"root", integer},
       {"round_index", integer}},
      {"arcs", "edges", "leaf_angle", "params", "tree", "root", "round_index"});
  schemas["Frames"] = object(
      {{"env", str},
       {"behavior", integer},
       {"frames",
        {{"type", "array"},
         {"items", object({{"agent", ids}, {"goal", ids}, {"x", num}, {"height", num}}, {})}}}},
      {"env", "behavior", "frames"});
  schemas["Suggestion"] = object({{"mode", {{"type", "string"}, {"enum", {"group", "pair"}}}},
                                  {"behaviors", ids},
                                  {"node_1", integer},
                                  {"node_2", integer},
                                  {"g1", ids},
                                  {"g2", ids}},
                                 {"mode"});
  schemas["ComparisonRequest"] = object(
      {{"g1", ids},
       {"g2", ids},
       {"verdict", {{"type", "string"}, {"enum", {"g1_preferred", "g2_preferred", "tie", "skip"}}}},
       {"origin", {{"type", "string"}, {"enum", {"human", "suggestion_accepted"}}}}},
      {"g1", "g2", "verdict"});
  schemas["ComparisonCreated"] =
      object({{"comparison_id", str}, {"queries_generated", integer}}, {"comparison_id", "queries_generated"});
  schemas["Comparison"] = object({{"id", str},
                                  {"round", integer},
                                  {"g1", ids},
                                  {"g2", ids},
                                  {"verdict", str},
                                  {"origin", str}},
                                 {"id", "round", "g1", "g2", "verdict", "origin"});
  schemas["History"] = object({{"comparisons", {{"type", "array"}, {"items", ref("Comparison")}}},
                               {"total_queries", integer}},
                              {"comparisons", "total_queries"});
  schemas["AdvanceAccepted"] = object({{"phase", str}, {"round_index", integer}}, {"phase", "round_index"});
  schemas["Training"] = object({{"phase", phase},
                                {"progress", {{"type", "number"}, {"minimum", 0}, {"maximum", 1}}},
                                {"round_index", integer},
                                {"stage", str},
                                {"error", str}},
                               {"phase", "progress", "round_index"});

  const json sid{{"name", "session_id"}, {"in", "path"}, {"required", true}, {"schema", str}};
  const json bid{{"name", "behavior_id"}, {"in", "path"}, {"required", true}, {"schema", integer}};
  const json idem{{"name", "Idempotency-Key"}, {"in", "header"}, {"required", false}, {"schema", str}};

  json paths;
  paths["/sessions"]["post"] = {{"summary", "Start the interactive session"},
                                {"parameters", {idem}},
                                {"requestBody", {{"content", json_body("SessionConfig")}}},
                                {"responses",
                                 {{"201", resp("Session started", "SessionCreated")},
                                  {"409", err("A session is already active")},
                                  {"422", err("Invalid configuration")}}}};
  paths["/sessions/{session_id}/rounds/current"]["get"] = {
      {"parameters", {sid}},
      {"responses", {{"200", resp("Current round", "CurrentRound")}, {"404", err("Unknown session")}}}};
  paths["/sessions/{session_id}/layout"]["get"] = {
      {"parameters", {sid}},
      {"responses", {{"200", resp("Radial scene", "LayoutScene")}, {"404", err("Unknown session")}}}};
  paths["/sessions/{session_id}/history"]["get"] = {
      {"parameters", {sid}},
      {"responses", {{"200", resp("Recorded comparisons", "History")}, {"404", err("Unknown session")}}}};
  paths["/sessions/{session_id}/behaviors/{behavior_id}/frames"]["get"] = {
      {"parameters", {sid, bid}},
      {"responses", {{"200", resp("Drawable frames", "Frames")}, {"404", err("Unknown session or behavior")}}}};
  paths["/sessions/{session_id}/suggestions"]["get"] = {
      {"parameters",
       {sid,
        {{"name", "mode"},
         {"in", "query"},
         {"required", false},
         {"schema", {{"type", "string"}, {"enum", {"group", "pair"}}}}}}},
      {"responses",
       {{"200", resp("Suggested comparison", "Suggestion")},
        {"204", resp("No uncompared candidates left", nullptr)},
        {"409", err("Not collecting feedback")},
        {"422", err("Unknown mode")}}}};
  paths["/sessions/{session_id}/comparisons"]["post"] = {
      {"parameters", {sid, idem}},
      {"requestBody", {{"required", true}, {"content", json_body("ComparisonRequest")}}},
      {"responses",
       {{"201", resp("Comparison recorded", "ComparisonCreated")},
        {"409", err("Not collecting feedback")},
        {"422", err("Invalid, stale or overlapping groups")}}}};
  paths["/sessions/{session_id}/rounds/advance"]["post"] = {
      {"parameters", {sid, idem}},
      {"responses", {{"202", resp("Training started", "AdvanceAccepted")}, {"409", err("Training already running")}}}};
  paths["/sessions/{session_id}/training"]["get"] = {
      {"parameters", {sid}}, {"responses", {{"200", resp("Training status", "Training")}}}};

  // Answers every operation can give.
  for (auto& [path, ops] : paths.items()) {
    for (auto& [method, op] : ops.items()) {
      auto& r = op["responses"];
      r["401"] = err("Missing or invalid bearer token");
      r["500"] = err("Internal error");
      if (path != "/sessions" && !r.contains("404")) r["404"] = err("Unknown session");
      if (method == "post") r["400"] = err("Malformed JSON body");
    }
  }

  return {{"openapi", "3.0.3"},
          {"info", {{"title", "grlhf workbench API"}, {"version", "1.0.0"}}},
          {"servers", {{{"url", kPrefix}}}},
          {"components",
           {{"schemas", std::move(schemas)},
            {"securitySchemes", {{"bearer", {{"type", "http"}, {"scheme", "bearer"}}}}}}},
          {"security", {{{"bearer", json::array()}}}},
          {"paths", std::move(paths)}};
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  explicit Impl(Service& s) : service(s) {}
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto forward = [this](const httplib::Request& in, httplib::Response& out) {
    ApiRequest req;
    req.method = in.method;
    req.path = in.path;
    for (const auto& [k, v] : in.params) req.query[k] = v;
    for (const auto& [k, v] : in.headers) {
      std::string key = k;
      std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
      req.headers[key] = v;
    }
    req.body = in.body;
    const ApiResponse r = impl_->service.handle(req);
    out.status = r.status;
    for (const auto& [k, v] : r.headers) out.set_header(k, v);
    if (r.status != 204) out.set_content(r.body, r.content_type);
  };
  impl_->server.Get(".*", forward);
  impl_->server.Post(".*", forward);
  impl_->server.Options(".*", forward);
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace grlhf
