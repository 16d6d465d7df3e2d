#include "somonitor/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <thread>

#include "somonitor/error.hpp"
#include "somonitor/store.hpp"
#include "somonitor/text.hpp"

namespace somonitor::llm {

namespace {

bool is_name_char(char c, bool first) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' ||
         (!first && std::isdigit(static_cast<unsigned char>(c)));
}

// Calls on_text for literal runs and on_placeholder for each {name}.
template <class OnText, class OnPlaceholder>
void scan_template(std::string_view body, OnText on_text, OnPlaceholder on_placeholder) {
  std::size_t i = 0;
  while (i < body.size()) {
    const char c = body[i];
    if ((c == '{' || c == '}') && i + 1 < body.size() && body[i + 1] == c) {
      on_text(std::string_view(&body[i], 1));
      i += 2;
      continue;
    }
    if (c == '{') {
      std::size_t j = i + 1;
      while (j < body.size() && is_name_char(body[j], j == i + 1)) ++j;
      if (j > i + 1 && j < body.size() && body[j] == '}') {
        on_placeholder(std::string(body.substr(i + 1, j - i - 1)));
        i = j + 1;
        continue;
      }
    }
    on_text(std::string_view(&body[i], 1));
    ++i;
  }
}

std::size_t word_count(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    const bool space = std::isspace(static_cast<unsigned char>(c));
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

}  // namespace

std::set<std::string> placeholders(std::string_view body) {
  std::set<std::string> names;
  scan_template(body, [](std::string_view) {}, [&](std::string name) { names.insert(std::move(name)); });
  return names;
}

PromptTemplate PromptTemplate::from_body(std::string template_id, std::string body) {
  PromptTemplate t{std::move(template_id), std::move(body), {}};
  t.required_bindings = placeholders(t.body);
  return t;
}

std::string render_prompt(const PromptTemplate& tmpl, const Bindings& bindings) {
  for (const auto& name : tmpl.required_bindings) {
    if (!bindings.contains(name)) throw Error(Errc::MissingBinding, "missing binding '" + name + "'", {name});
  }
  std::string out;
  scan_template(
      tmpl.body, [&](std::string_view lit) { out.append(lit); },
      [&](const std::string& name) {
        if (!tmpl.required_bindings.contains(name)) {
          throw Error(Errc::UnknownPlaceholder, "undeclared placeholder '" + name + "'", {name});
        }
        out += bindings.at(name);
      });
  return out;
}

std::string request_digest(const CompletionRequest& r) {
  Json j = {{"system", r.system_prompt},
            {"user", r.user_prompt},
            {"temperature", r.temperature},
            {"seed", r.seed ? Json(*r.seed) : Json(nullptr)},
            {"max_output", r.max_output},
            {"backend", r.backend_id}};
  return text::sha256_hex(j.dump());
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

void FairSemaphore::acquire() {
  std::unique_lock lock(mu_);
  const std::uint64_t ticket = next_ticket_++;
  cv_.wait(lock, [&] { return ticket == serving_ && permits_ > 0; });
  --permits_;
  ++serving_;
  cv_.notify_all();
}

void FairSemaphore::release() {
  {
    std::lock_guard lock(mu_);
    ++permits_;
  }
  cv_.notify_all();
}

Gateway::Gateway(GatewayConfig config, store::Store* audit_store) : config_(std::move(config)), audit_(audit_store) {
  if (config_.max_parallel < 1) throw Error(Errc::InvalidArgument, "gateway.max_parallel must be >= 1");
  if (config_.retry_limit < 0) throw Error(Errc::InvalidArgument, "gateway.retry_limit must be >= 0");
}

void Gateway::register_backend(const std::string& id, std::shared_ptr<CompletionBackend> backend) {
  std::lock_guard lock(mu_);
  backends_[id] = Slot{std::move(backend), std::make_unique<FairSemaphore>(config_.max_parallel)};
}

void Gateway::register_embedder(const std::string& id, std::shared_ptr<EmbeddingBackend> backend) {
  std::lock_guard lock(mu_);
  embedders_[id] = std::move(backend);
}

bool Gateway::has_backend(const std::string& id) const {
  std::lock_guard lock(mu_);
  return backends_.contains(id);
}

bool Gateway::has_embedder(const std::string& id) const {
  std::lock_guard lock(mu_);
  return embedders_.contains(id);
}

CompletionResult Gateway::complete(CompletionRequest request) {
  if (request.backend_id.empty()) request.backend_id = config_.default_backend;
  if (request.user_prompt.empty()) throw Error(Errc::InvalidArgument, "empty user prompt");
  if (!(request.temperature >= 0.0 && request.temperature <= 2.0)) {
    throw Error(Errc::InvalidArgument, "temperature outside [0,2]");
  }
  CompletionBackend* backend = nullptr;
  FairSemaphore* gate = nullptr;
  {
    std::lock_guard lock(mu_);
    auto it = backends_.find(request.backend_id);
    if (it == backends_.end()) {
      throw Error(Errc::BackendUnavailable, "backend '" + request.backend_id + "' not registered");
    }
    backend = it->second.backend.get();
    gate = it->second.gate.get();
  }

  CompletionResult result;
  result.backend_id = request.backend_id;
  result.request_digest = request_digest(request);
  const auto started = std::chrono::steady_clock::now();
  std::string last_error;
  bool ok = false;
  Errc failure = Errc::BackendUnavailable;
  for (int attempt = 1; attempt <= config_.retry_limit + 1; ++attempt) {
    result.attempt_count = attempt;
    gate->acquire();
    try {
      result.text = backend->complete(request);
      ok = true;
    } catch (const TransientFailure& e) {
      last_error = e.what();
    } catch (const Error& e) {
      gate->release();
      last_error = e.what();
      failure = e.code();
      break;
    } catch (...) {
      gate->release();
      throw;
    }
    gate->release();
    if (ok) break;
    if (attempt <= config_.retry_limit) std::this_thread::sleep_for(config_.base_backoff * (1 << (attempt - 1)));
  }
  result.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
  if (ok && word_count(result.text) > static_cast<std::size_t>(request.max_output)) {
    ok = false;
    failure = Errc::ResponseTooLong;
    last_error = "response exceeds max_output=" + std::to_string(request.max_output);
  }

  if (audit_) {
    audit_->append_audit(Json{{"request_digest", result.request_digest},
                              {"backend_id", result.backend_id},
                              {"template_id", request.template_id},
                              {"attempt_count", result.attempt_count},
                              {"latency_ms", result.latency.count()},
                              {"ok", ok},
                              {"error", ok ? Json(nullptr) : Json(last_error)}});
  }
  if (!ok) {
    throw Error(failure, "backend '" + request.backend_id + "' failed after " + std::to_string(result.attempt_count) +
                             " attempt(s): " + last_error);
  }
  return result;
}

EmbeddingMatrix Gateway::embed(const std::vector<std::string>& texts, const std::string& backend_id,
                               NormPolicy policy) {
  if (texts.empty()) throw Error(Errc::EmptyInput, "no texts to embed");
  std::shared_ptr<EmbeddingBackend> backend;
  {
    std::lock_guard lock(mu_);
    auto it = embedders_.find(backend_id);
    if (it == embedders_.end()) throw Error(Errc::BackendUnavailable, "embedder '" + backend_id + "' not registered");
    backend = it->second;
  }
  std::vector<std::vector<double>> rows;
  try {
    rows = backend->embed(texts);
  } catch (const TransientFailure& e) {
    throw Error(Errc::BackendUnavailable, e.what());
  }
  if (rows.size() != texts.size()) throw Error(Errc::BackendUnavailable, "embedder returned wrong row count");
  const std::size_t d = rows.front().size();
  EmbeddingMatrix m;
  m.norm_policy = policy;
  m.vectors.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) throw Error(Errc::BackendUnavailable, "ragged embedding rows");
    for (std::size_t c = 0; c < d; ++c) m.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    const double norm = m.vectors.row(static_cast<Eigen::Index>(i)).norm();
    if (norm == 0.0) {
      m.zero_rows.push_back(i);
    } else if (policy == NormPolicy::L2Normalized) {
      m.vectors.row(static_cast<Eigen::Index>(i)) /= norm;
    }
  }
  return m;
}

}  // namespace somonitor::llm
