#include "mple/llm_gateway.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mple/errors.hpp"

namespace mple {

void validate_request(const GenerationRequest& request) {
    if (request.task_id.empty()) throw ContractViolation("request: empty task_id");
    if (request.attempt_index < 0) throw ContractViolation("request: negative attempt_index");
    if (request.kind == GenStep::translate) {
        if (!request.source_program)
            throw ContractViolation("translate request: missing source_program");
        if (request.source_program->language == request.target_language)
            throw ContractViolation(
                "translate request: source and target language must differ");
    }
    if (request.kind == GenStep::refine && !request.feedback)
        throw ContractViolation("refine request: missing feedback");
}

std::string feedback_hash(const std::string& summary) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (const unsigned char c : summary) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    char buffer[17];
    std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(hash));
    return buffer;
}

std::string request_fingerprint(const GenerationRequest& request) {
    std::string fp = request.task_id + "|" + gen_step_name(request.kind) + "|" +
                     language_name(request.target_language) + "|" +
                     std::to_string(request.attempt_index);
    if (request.kind == GenStep::refine && request.feedback)
        fp += "|" + feedback_hash(request.feedback->summary);
    return fp;
}

std::string build_prompt(const GenerationRequest& request) {
    validate_request(request);
    std::string prompt;
    switch (request.kind) {
        case GenStep::generate:
            prompt = "Write a complete " + language_name(request.target_language) +
                     " program solving the following task. Reply with a single fenced code "
                     "block.\n\nTask:\n" +
                     request.description + "\n";
            if (!request.visible_tests.empty()) {
                prompt += "\nYour program must pass these tests:\n";
                for (const auto& test : request.visible_tests) prompt += test.snippet + "\n";
            }
            break;
        case GenStep::translate:
            prompt = "Translate the following " +
                     language_name(request.source_program->language) + " program to " +
                     language_name(request.target_language) +
                     ". Maintain the logical structure of the code. Reply with a single fenced "
                     "code block.\n\nSource program (" +
                     language_name(request.source_program->language) + "):\n" +
                     request.source_program->source + "\n";
            break;
        case GenStep::refine:
            prompt = "Fix the following " + language_name(request.target_language) +
                     " program so it passes the failing tests below. Reply with a single fenced "
                     "code block.\n\nTask:\n" +
                     request.description + "\n";
            if (request.source_program)
                prompt += "\nPrevious program:\n" + request.source_program->source + "\n";
            break;
    }
    if (request.feedback) prompt += "\nTest failures:\n" + request.feedback->summary;
    return prompt;
}

std::string extract_code(const std::string& response) {
    std::string code;
    const auto open = response.find("```");
    if (open == std::string::npos) {
        code = response;
    } else {
        const auto content_begin = response.find('\n', open);
        if (content_begin == std::string::npos) throw ExtractionError(response);
        const auto close = response.find("```", content_begin + 1);
        if (close == std::string::npos) throw ExtractionError(response);
        code = response.substr(content_begin + 1, close - content_begin - 1);
    }
    if (code.find_first_not_of(" \t\r\n") == std::string::npos) throw ExtractionError(response);
    return code;
}

CandidateProgram generate(const GenerationRequest& request, LlmBackend& backend) {
    validate_request(request);
    const std::string prompt = build_prompt(request);
    const std::string response = backend.complete(request, prompt);

    CandidateProgram program;
    program.source = extract_code(response);
    program.language = request.target_language;
    program.lineage.step = request.kind;
    program.lineage.attempt_index = request.attempt_index;
    program.lineage.iteration = request.iteration;
    if (request.kind == GenStep::translate)
        program.lineage.source_language = request.source_program->language;
    return program;
}

namespace {

// Deterministic record/replay backend. Entries are JSONL objects
// {task_id, kind, language, attempt, feedback_hash?, response}; a refine
// entry without feedback_hash matches any feedback (fallback after the
// exact key). Later entries override earlier ones with the same key.
class ScriptedBackend : public LlmBackend {
  public:
    explicit ScriptedBackend(const std::string& script_path) {
        std::ifstream in(script_path);
        if (!in) throw IoError("cannot read script file: " + script_path);
        std::string line;
        std::size_t index = 0;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
            nlohmann::json entry;
            try {
                entry = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw ParseError("script entry " + std::to_string(index) + ": invalid JSON: " +
                                 e.what());
            }
            for (const char* field : {"task_id", "kind", "language", "attempt", "response"}) {
                if (!entry.contains(field))
                    throw ParseError("script entry " + std::to_string(index) +
                                     ": missing field '" + std::string(field) + "'");
            }
            std::string key = entry.at("task_id").get<std::string>() + "|" +
                              entry.at("kind").get<std::string>() + "|" +
                              entry.at("language").get<std::string>() + "|" +
                              std::to_string(entry.at("attempt").get<int>());
            if (entry.contains("feedback_hash"))
                key += "|" + entry.at("feedback_hash").get<std::string>();
            responses_[key] = entry.at("response").get<std::string>();
            ++index;
        }
    }

    std::string complete(const GenerationRequest& request, const std::string&) override {
        requests_.fetch_add(1);
        const std::string exact = request_fingerprint(request);
        auto it = responses_.find(exact);
        if (it == responses_.end() && request.kind == GenStep::refine) {
            // fall back to the hash-free key
            const auto bar = exact.rfind('|');
            it = responses_.find(exact.substr(0, bar));
        }
        if (it == responses_.end()) throw ScriptMissError(exact);
        return it->second;
    }

    UsageRecord record_usage() const override {
        return {requests_.load(), 0, 0, 0.0};
    }

    std::string model_name() const override { return "scripted"; }

  private:
    std::unordered_map<std::string, std::string> responses_;
    std::atomic<std::uint64_t> requests_{0};
};

// Chat-completions-style HTTP client with bounded in-flight requests and
// exponential backoff on transport errors and 429/5xx.
class LiveBackend : public LlmBackend {
  public:
    explicit LiveBackend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {
        const auto scheme_end = descriptor_.endpoint.find("://");
        if (scheme_end == std::string::npos)
            throw ConfigError("live endpoint must be a http(s) URL: " + descriptor_.endpoint);
        const auto path_begin = descriptor_.endpoint.find('/', scheme_end + 3);
        if (path_begin == std::string::npos) {
            base_ = descriptor_.endpoint;
            path_ = "/v1/chat/completions";
        } else {
            base_ = descriptor_.endpoint.substr(0, path_begin);
            path_ = descriptor_.endpoint.substr(path_begin);
        }
        const char* key = std::getenv(kApiKeyEnvVar);
        api_key_ = key ? key : "";
    }

    std::string complete(const GenerationRequest&, const std::string& prompt) override {
        nlohmann::json body;
        body["model"] = descriptor_.model_name;
        body["temperature"] = descriptor_.temperature;
        body["messages"] = nlohmann::json::array(
            {{{"role", "system"},
              {"content", "You are an expert programmer. Reply with one fenced code block."}},
             {{"role", "user"}, {"content", prompt}}});

        InflightSlot slot(*this);
        std::string last_error;
        int last_status = 0;
        for (int attempt = 0; attempt <= descriptor_.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(500 * (1 << (attempt - 1))));
            }
            const auto start = std::chrono::steady_clock::now();
            httplib::Client client(base_);
            client.set_read_timeout(std::chrono::duration<double>(descriptor_.request_timeout));
            httplib::Headers headers;
            if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
            auto res = client.Post(path_, headers, body.dump(), "application/json");
            const double latency =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            last_status = res->status;
            if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                throw BackendError("backend HTTP " + std::to_string(res->status) + ": " +
                                       res->body,
                                   res->status);

            nlohmann::json reply;
            try {
                reply = nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                throw BackendError(std::string("unparseable backend response: ") + e.what(),
                                   res->status);
            }
            std::string content;
            try {
                content = reply.at("choices").at(0).at("message").at("content")
                              .get<std::string>();
            } catch (const nlohmann::json::exception&) {
                throw BackendError("backend response missing choices[0].message.content",
                                   res->status);
            }
            {
                std::lock_guard lock(usage_mutex_);
                usage_.requests += 1;
                usage_.total_latency_seconds += latency;
                if (reply.contains("usage")) {
                    usage_.prompt_tokens +=
                        reply["usage"].value("prompt_tokens", std::uint64_t{0});
                    usage_.completion_tokens +=
                        reply["usage"].value("completion_tokens", std::uint64_t{0});
                }
            }
            return content;
        }
        throw BackendError("backend unavailable after " +
                               std::to_string(descriptor_.max_retries) + " retries: " +
                               last_error,
                           last_status);
    }

    UsageRecord record_usage() const override {
        std::lock_guard lock(usage_mutex_);
        return usage_;
    }

    std::string model_name() const override { return descriptor_.model_name; }

  private:
    struct InflightSlot {
        explicit InflightSlot(LiveBackend& owner) : backend(owner) {
            std::unique_lock lock(backend.inflight_mutex_);
            backend.inflight_cv_.wait(lock, [&] {
                return backend.inflight_ < backend.descriptor_.max_inflight;
            });
            ++backend.inflight_;
        }
        ~InflightSlot() {
            {
                std::lock_guard lock(backend.inflight_mutex_);
                --backend.inflight_;
            }
            backend.inflight_cv_.notify_one();
        }
        LiveBackend& backend;
    };

    BackendDescriptor descriptor_;
    std::string base_;
    std::string path_;
    std::string api_key_;
    mutable std::mutex usage_mutex_;
    UsageRecord usage_;
    std::mutex inflight_mutex_;
    std::condition_variable inflight_cv_;
    unsigned inflight_ = 0;
};

}  // namespace

std::unique_ptr<LlmBackend> make_backend(const BackendDescriptor& descriptor) {
    if (descriptor.request_timeout <= 0 || descriptor.max_retries < 0)
        throw ConfigError("backend: timeout must be positive and retries non-negative");
    if (descriptor.mode == BackendMode::scripted) {
        if (descriptor.script_path.empty())
            throw ConfigError("scripted backend requires a script path");
        if (!descriptor.endpoint.empty() || !descriptor.model_name.empty())
            throw ConfigError("scripted backend must not set endpoint or model");
        return std::make_unique<ScriptedBackend>(descriptor.script_path);
    }
    if (descriptor.endpoint.empty() || descriptor.model_name.empty())
        throw ConfigError("live backend requires endpoint and model");
    if (!descriptor.script_path.empty())
        throw ConfigError("live backend must not set a script path");
    return std::make_unique<LiveBackend>(descriptor);
}

}  // namespace mple
