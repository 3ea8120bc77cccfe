// Eigen must come before httplib: <resolv.h> defines a _res macro
#include "swarmtax/hil.hpp"

#include <httplib.h>

#include <cmath>
#include <iostream>

#include "swarmtax/errors.hpp"

namespace swarmtax {

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& error, const std::string& detail) {
    send_json(res, status, {{"error", error}, {"detail", detail}});
}

std::string image_url(const std::string& id) {
    return "/api/v1/images/" + id;
}

struct Job {
    std::string status = "running";  // running | done | failed
    json metrics = json::object();
};

}  // namespace

struct HilService::Impl {
    ServiceConfig cfg;
    DatasetManifest manifest;
    std::vector<TrajectoryImage> images;
    std::map<std::string, std::size_t> index_of;
    LabelStore store;

    std::mutex mu;  // guards everything below
    std::optional<EmbeddingNet<float>> net;
    std::vector<std::vector<float>> features;
    std::map<std::string, QueryItem> queries;
    std::vector<bool> queried;
    std::optional<std::string> pending;
    std::uint64_t next_query = 1;
    Rng rng;
    std::map<int, Job> jobs;
    int next_job = 1;
    std::thread worker;
    bool job_running = false;

    httplib::Server server;
    std::thread server_thread;

    explicit Impl(ServiceConfig c)
        : cfg{std::move(c)}, store{cfg.journal}, rng{derive_seed(cfg.seed, 0x9e4)} {
        manifest = read_manifest(cfg.manifest, true);
        images = load_images(manifest, cfg.manifest.parent_path());
        for (std::size_t i = 0; i < manifest.records.size(); ++i) {
            index_of[manifest.records[i].id] = i;
        }
        if (images.empty()) {
            throw ContractError("hil service: dataset is empty");
        }
        for (const auto& name : cfg.seed_classes) {
            store.ensure_class(name);
        }
        if (cfg.checkpoint) {
            net = load_checkpoint(*cfg.checkpoint);
        }
        queried.assign(images.size(), false);
        next_query = store.max_query_number() + 1;
        refresh_features();
        routes();
    }

    // caller holds mu (or is the constructor)
    void refresh_features() {
        features.clear();
        if (net) {
            for (const auto& b : embed_images(*net, images)) {
                features.emplace_back(b.values.begin(), b.values.end());
            }
        } else {
            for (const auto& img : images) {
                features.push_back(img.pixels);
            }
        }
    }

    std::vector<bool> labeled_flags() const {
        std::vector<bool> flags(images.size(), false);
        for (const auto& [id, cls] : store.active_labels()) {
            if (const auto it = index_of.find(id); it != index_of.end()) {
                flags[it->second] = true;
            }
        }
        return flags;
    }

    std::size_t budget() const {
        return std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil(cfg.budget_fraction * static_cast<double>(images.size()))));
    }

    json class_list() const {
        json out = json::array();
        for (const auto& c : store.classes()) {
            out.push_back({{"class_id", c.class_id},
                           {"name", c.name},
                           {"count", c.count},
                           {"exemplar_url", c.exemplar.empty() ? json(nullptr) : json(image_url(c.exemplar))}});
        }
        return out;
    }

    json query_json(const QueryItem& q) const {
        return {{"query_id", q.query_id},
                {"image_id", q.image_id},
                {"image_url", image_url(q.image_id)},
                {"status", to_string(q.status)},
                {"classes", class_list()}};
    }

    void next_query_handler(httplib::Response& res) {
        std::lock_guard lock(mu);
        if (pending) {
            const auto& q = queries.at(*pending);
            send_json(res, 200, query_json(q));
            return;
        }
        const auto pick = select_query(features, labeled_flags(), queried, rng);
        if (!pick) {
            send_json(res, 200,
                      {{"end_of_queue", true}, {"labeled", store.labeled_count()}, {"total", images.size()}});
            return;
        }
        QueryItem q{"q" + std::to_string(next_query++), manifest.records[*pick].id, QueryStatus::pending};
        queried[*pick] = true;
        pending = q.query_id;
        queries[q.query_id] = q;
        send_json(res, 200, query_json(q));
    }

    void label_handler(const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception& e) {
            send_error(res, 400, "bad_request", std::string("body is not JSON: ") + e.what());
            return;
        }
        if (!body.is_object() || !body.contains("query_id") || !body["query_id"].is_string()) {
            send_error(res, 400, "bad_request", "query_id (string) is required");
            return;
        }
        const bool has_id = body.contains("class_id");
        const bool has_name = body.contains("new_class_name");
        if (has_id == has_name) {
            send_error(res, 400, "bad_request", "give exactly one of class_id or new_class_name");
            return;
        }
        ClassChoice choice;
        if (has_id) {
            if (!body["class_id"].is_number_integer()) {
                send_error(res, 400, "bad_request", "class_id must be an integer");
                return;
            }
            choice = ExistingClass{body["class_id"].get<int>()};
        } else {
            if (!body["new_class_name"].is_string()) {
                send_error(res, 400, "bad_request", "new_class_name must be a string");
                return;
            }
            choice = NewClass{body["new_class_name"].get<std::string>()};
        }
        const auto query_id = body["query_id"].get<std::string>();
        std::string labeler = body.value("labeler_id", std::string{});
        if (labeler.empty()) {
            labeler = req.get_header_value("X-Labeler");
        }
        if (labeler.empty()) {
            labeler = "anonymous";
        }

        std::lock_guard lock(mu);
        std::string image_id;
        if (const auto it = queries.find(query_id); it != queries.end()) {
            image_id = it->second.image_id;
        } else if (const auto prior = store.find_query(query_id)) {
            image_id = prior->image_id;  // replay of a query answered before a restart
        } else {
            send_error(res, 404, "unknown_query", "no query " + query_id);
            return;
        }
        try {
            const auto rec = store.submit(query_id, image_id, choice, labeler);
            if (auto it = queries.find(query_id); it != queries.end()) {
                it->second.status = QueryStatus::labeled;
            }
            if (pending == query_id) {
                pending.reset();
            }
            send_json(res, 200,
                      {{"label_id", rec.label_id},
                       {"class_id", rec.class_id},
                       {"query_id", rec.query_id},
                       {"image_id", rec.image_id}});
        } catch (const LabelError& e) {
            switch (e.kind) {
                case LabelError::Kind::unknown_class:
                    send_error(res, 404, "unknown_class", e.what());
                    break;
                case LabelError::Kind::conflict:
                    send_error(res, 409, "conflict", e.what());
                    break;
                default:
                    send_error(res, 400, "bad_request", e.what());
            }
        }
    }

    void image_handler(const httplib::Request& req, httplib::Response& res) {
        std::string id = req.matches[1];
        if (id.size() > 4 && id.ends_with(".png")) {
            id.resize(id.size() - 4);
        }
        const auto it = index_of.find(id);
        if (it == index_of.end()) {
            send_error(res, 404, "unknown_image", "no image " + id);
            return;
        }
        const auto png = encode_png(images[it->second]);
        res.status = 200;
        res.set_content(reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
    }

    void finetune_handler(httplib::Response& res) {
        std::lock_guard lock(mu);
        if (job_running) {
            send_error(res, 409, "busy", "a fine-tune job is already running");
            return;
        }
        if (worker.joinable()) {
            worker.join();
        }
        // snapshot labels and parameters at job start
        std::vector<std::string> labels(images.size());
        for (const auto& [id, cls] : store.active_labels()) {
            if (const auto it = index_of.find(id); it != index_of.end()) {
                labels[it->second] = std::to_string(cls);
            }
        }
        const EmbeddingNet<float> start =
            net ? *net : EmbeddingNet<float>::initialized(NetworkSpec::default_architecture(), cfg.seed);
        const int id = next_job++;
        jobs[id] = Job{};
        job_running = true;
        auto options = cfg.finetune;
        options.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(id));
        worker = std::thread([this, id, start, labels = std::move(labels), options] {
            Job done;
            std::optional<EmbeddingNet<float>> accepted;
            try {
                auto result = finetune(start, images, labels, options);
                done.status = "done";
                done.metrics = result.metrics();
                if (!result.reverted && result.triplet_count > 0) {
                    if (cfg.finetune_out) {
                        save_checkpoint(*cfg.finetune_out, result.net, options.train.to_json());
                    }
                    accepted = std::move(result.net);
                }
            } catch (const std::exception& e) {
                done.status = "failed";
                done.metrics = {{"detail", e.what()}};
            }
            std::lock_guard lock(mu);
            if (accepted) {
                net = std::move(accepted);
                refresh_features();
            }
            jobs[id] = std::move(done);
            job_running = false;
        });
        send_json(res, 202, {{"job_id", id}});
    }

    void routes() {
        server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
            if (cfg.token.empty() || req.get_header_value("Authorization") == "Bearer " + cfg.token) {
                return httplib::Server::HandlerResponse::Unhandled;
            }
            send_error(res, 401, "unauthorized", "missing or wrong bearer token");
            return httplib::Server::HandlerResponse::Handled;
        });
        server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (!res.body.empty()) {
                return httplib::Server::HandlerResponse::Unhandled;
            }
            send_error(res, res.status, res.status == 404 ? "not_found" : "error", req.method + " " + req.path);
            return httplib::Server::HandlerResponse::Handled;
        });
        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                send_error(res, 500, "internal", e.what());
            } catch (...) {
                send_error(res, 500, "internal", "unknown error");
            }
        });

        server.Get("/api/v1/queries/next",
                   [this](const httplib::Request&, httplib::Response& res) { next_query_handler(res); });
        server.Post("/api/v1/labels",
                    [this](const httplib::Request& req, httplib::Response& res) { label_handler(req, res); });
        server.Get("/api/v1/classes", [this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"classes", class_list()}});
        });
        server.Get(R"(/api/v1/images/([^/]+))",
                   [this](const httplib::Request& req, httplib::Response& res) { image_handler(req, res); });
        server.Get("/api/v1/progress", [this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"labeled", store.labeled_count()}, {"total", images.size()}, {"budget", budget()}});
        });
        server.Post("/api/v1/finetune",
                    [this](const httplib::Request&, httplib::Response& res) { finetune_handler(res); });
        server.Get(R"(/api/v1/jobs/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
            const int id = std::stoi(req.matches[1]);
            std::lock_guard lock(mu);
            const auto it = jobs.find(id);
            if (it == jobs.end()) {
                send_error(res, 404, "unknown_job", "no job " + std::to_string(id));
                return;
            }
            send_json(res, 200, {{"job_id", id}, {"status", it->second.status}, {"metrics", it->second.metrics}});
        });
    }
};

HilService::HilService(ServiceConfig cfg) : impl_{std::make_unique<Impl>(std::move(cfg))} {}

HilService::~HilService() {
    stop();
    join_jobs();
}

void HilService::listen(const std::string& host, int port) {
    if (!impl_->server.listen(host, port)) {
        throw IoError("cannot listen on " + host + ":" + std::to_string(port));
    }
}

int HilService::start(const std::string& host, int port) {
    int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) {
        throw IoError("cannot bind " + host + ":" + std::to_string(port));
    }
    impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void HilService::stop() {
    impl_->server.stop();
    if (impl_->server_thread.joinable()) {
        impl_->server_thread.join();
    }
}

void HilService::join_jobs() {
    if (impl_->worker.joinable()) {
        impl_->worker.join();
    }
}

}  // namespace swarmtax
