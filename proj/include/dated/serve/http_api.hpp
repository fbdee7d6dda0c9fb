#pragma once

#include <string>

#include "dated/serve/chat.hpp"

namespace httplib {
class Server;
}

namespace dated::serve {

// Compact JSON; invalid UTF-8 in generated text becomes U+FFFD.
std::string to_wire(const Json& value);

// HTTP status for an error code: 400 for bad requests, 404 for unknown
// models, 500 otherwise.
int http_status_for(const std::string& code);

// Routes:
//   GET  /v1/models  -> [{id, cutoff_year, stage}]
//   POST /v1/chat    -> {model, text, seed, finish_reason, usage}
//   POST /v1/compare -> {results: [{model, text, ...} | {model, error}]}
// Every failure answers with {code, message}.
void install_routes(httplib::Server& server, const ModelRegistry& registry,
                    const ChatService& chat);

}  // namespace dated::serve
