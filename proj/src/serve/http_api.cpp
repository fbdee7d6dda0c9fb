#include "dated/serve/http_api.hpp"

#include <httplib.h>

namespace dated::serve {
namespace {

void reply_error(httplib::Response& res, const std::string& code, const std::string& message) {
  res.status = http_status_for(code);
  res.set_content(to_wire(Json{{"code", code}, {"message", message}}), "application/json");
}

template <typename F>
void handle(httplib::Response& res, F&& f) {
  try {
    res.set_content(to_wire(f()), "application/json");
    res.status = 200;
  } catch (const Error& e) {
    reply_error(res, e.code(), e.what());
  } catch (const Json::parse_error& e) {
    reply_error(res, "invalid_argument", std::string("malformed JSON: ") + e.what());
  } catch (const std::exception& e) {
    reply_error(res, "internal", e.what());
  }
}

}  // namespace

std::string to_wire(const Json& value) {
  return value.dump(-1, ' ', false, Json::error_handler_t::replace);
}

int http_status_for(const std::string& code) {
  if (code == "invalid_argument" || code == "context_overflow") return 400;
  if (code == "not_found") return 404;
  return 500;
}

void install_routes(httplib::Server& server, const ModelRegistry& registry,
                    const ChatService& chat) {
  server.Get("/v1/models", [&registry](const httplib::Request&, httplib::Response& res) {
    handle(res, [&] {
      Json out = Json::array();
      for (const auto& e : registry.list()) {
        out.push_back({{"id", e.id}, {"cutoff_year", e.cutoff_year},
                       {"stage", train::stage_name(e.stage)}});
      }
      return out;
    });
  });
  server.Post("/v1/chat", [&chat](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      return chat_response_to_json(chat.chat(chat_request_from_json(Json::parse(req.body))));
    });
  });
  server.Post("/v1/compare", [&chat](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      Json results = Json::array();
      for (const auto& slot : chat.compare(compare_request_from_json(Json::parse(req.body)))) {
        results.push_back(compare_slot_to_json(slot));
      }
      return Json{{"results", results}};
    });
  });
  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const std::string code = res.status == 404 ? "not_found" : "http_" + std::to_string(res.status);
    res.set_content(to_wire(Json{{"code", code}, {"message", req.method + " " + req.path}}),
                    "application/json");
  });
}

}  // namespace dated::serve
