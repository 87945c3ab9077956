#include "iotaudit/core/error.hpp"
#include "iotaudit/dest/analysis.hpp"
#include "iotaudit/dest/geo.hpp"
#include "iotaudit/dest/party.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <random>
#include <thread>

using namespace iotaudit;
using namespace iotaudit::dest;
using namespace iotaudit::testing;

namespace {

const std::filesystem::path kData = IOTAUDIT_DATA_DIR;

GeoProvider offline_provider() {
    return GeoProvider(std::make_shared<OfflineGeoDb>(OfflineGeoDb::load(kData / "geo" / "snapshot.csv")),
                       OrgAliases::load(kData / "geo" / "org_aliases.json"));
}

pcap::DeviceMetadata device(std::string id, std::string category, std::vector<std::string> patterns = {},
                            std::string brand = "") {
    pcap::DeviceMetadata d;
    d.device_id = std::move(id);
    d.category = std::move(category);
    d.first_party_patterns = std::move(patterns);
    d.brand = std::move(brand);
    return d;
}

DestinationRecord dest_of(std::string org, std::vector<std::string> domains = {}) {
    DestinationRecord r;
    r.ip = IpAddress::require("47.100.1.1");
    r.organization = std::move(org);
    r.domains = std::move(domains);
    return r;
}

pcap::FlowRecord flow_to(const std::string& server, std::uint64_t bytes, std::optional<PhaseLabel> phase = {}) {
    pcap::FlowRecord f;
    f.initiator.ip = IpAddress::require("192.168.1.10");
    f.responder.ip = IpAddress::require(server);
    f.device_is_initiator = true;
    f.bytes_total = bytes;
    f.payload_bytes_total = bytes / 2;
    f.phase = phase;
    return f;
}

} // namespace

TEST_CASE("offline snapshot lookups") {
    auto geo = offline_provider();
    auto g = geo.geolocate(IpAddress::require("8.8.8.8"));
    CHECK(g.country == "US");
    CHECK(g.organization == "Google");
    CHECK(g.source == GeoSourceKind::Offline);
    CHECK(geo.snapshot() == "curated-2024.06");
    CHECK(geo.geolocate(IpAddress::require("47.89.1.1")).organization == "Alibaba Cloud");
    CHECK(geo.geolocate(IpAddress::require("2001:4860:4860::8888")).country == "US");
    CHECK_THROWS_AS(geo.geolocate(IpAddress::require("10.0.0.1")), PreconditionError);
    auto miss = geo.geolocate(IpAddress::require("198.51.100.7"));
    CHECK(miss.country == "UNKNOWN");
    CHECK(miss.organization == "UNKNOWN");
    CHECK(geo.coverage().unknown == 1);
    CHECK(geo.coverage().offline == 3);
}

TEST_CASE("snapshot parser rejects overlaps and bad rows") {
    CHECK_THROWS_AS(OfflineGeoDb::parse("1.0.0.0,1.0.0.255,US,A,1\n1.0.0.128,1.0.1.0,US,B,2\n"), ParseError);
    CHECK_THROWS_AS(OfflineGeoDb::parse("1.0.0.0,1.0.0.255,US\n"), ParseError);
    auto db = OfflineGeoDb::parse("# snapshot: t1\n1.0.0.0,1.0.0.255,US,A,1\n");
    CHECK(db.snapshot() == "t1");
    CHECK_FALSE(db.lookup(IpAddress::require("1.0.1.0")));
}

TEST_CASE("aliases normalize case-insensitively and pass unknown names through") {
    OrgAliases a;
    a.add("Alibaba (US) Technology", "Alibaba Cloud");
    CHECK(a.normalize("alibaba (us) technology") == "Alibaba Cloud");
    CHECK(a.normalize("  Tuya ") == "Tuya");
}

TEST_CASE("online client is queried once per address, rate limited and cached") {
    TempDir dir;
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Get(R"(/geo/(.+))", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        if (req.matches[1] == "198.51.100.9") {
            res.status = 404;
            return;
        }
        res.set_content(R"({"country":"JP","org":"Example Org"})", "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const auto cache_path = dir.path() / "geo_cache.json";
    {
        GeoProvider geo;
        geo.set_online(std::make_unique<HttpGeoSource>("http://127.0.0.1:" + std::to_string(port) + "/geo",
                                                       std::chrono::milliseconds(200)),
                       cache_path);
        const auto before = std::chrono::steady_clock::now();
        auto a = geo.geolocate(IpAddress::require("198.51.100.8"));
        auto miss = geo.geolocate(IpAddress::require("198.51.100.9"));
        const auto elapsed = std::chrono::steady_clock::now() - before;
        CHECK(a.country == "JP");
        CHECK(a.source == GeoSourceKind::Online);
        CHECK(miss.country == "UNKNOWN");
        CHECK(elapsed >= std::chrono::milliseconds(200));
        geo.geolocate(IpAddress::require("198.51.100.8"));
        geo.geolocate(IpAddress::require("198.51.100.9"));
        CHECK(hits == 2);
        geo.save_cache();
    }
    server.stop();
    t.join();

    GeoProvider again;
    again.set_online(std::make_unique<HttpGeoSource>("http://127.0.0.1:1/geo", std::chrono::milliseconds(0),
                                                     std::chrono::seconds(1)),
                     cache_path);
    auto cached = again.geolocate(IpAddress::require("198.51.100.8"));
    CHECK(cached.source == GeoSourceKind::Cache);
    CHECK(cached.organization == "Example Org");
    CHECK_THROWS_AS(HttpGeoSource("https://ipapi.example/json"), ValidationError);
}

TEST_CASE("party rules fire in order") {
    PartyPolicyMap policy = PartyPolicyMap::from_json(Json::parse(R"({"entries":[
        {"pattern":"aliyuncs.com","kind":"domain","source":"camera privacy policy, storage section"},
        {"pattern":"Xiaomi","kind":"organization","source":"made-up entry for precedence"}]})"));
    auto cam = device("cam", "camera", {"Xiaomi", "mi.com"});

    auto first = classify_party(dest_of("Xiaomi"), &cam, policy);
    CHECK(first.party == Party::First);
    CHECK(first.evidence.find("'Xiaomi'") != std::string::npos);
    CHECK(classify_party(dest_of("Beijing Xiaomi Mobile Software"), &cam, policy).party == Party::First);
    CHECK(classify_party(dest_of("UNKNOWN", {"api.io.mi.com"}), &cam, policy).party == Party::First);

    auto support = classify_party(dest_of("Alibaba Cloud", {"oss-cn-beijing.aliyuncs.com"}), &cam, policy);
    CHECK(support.party == Party::Support);
    CHECK(support.evidence.find("aliyuncs.com") != std::string::npos);
    CHECK(support.evidence.find("storage section") != std::string::npos);

    auto speaker = device("spk", "speaker", {"Huawei"});
    auto third = classify_party(dest_of("Baidu", {"www.baidu.com"}), &speaker, policy);
    CHECK(third.party == Party::Third);
    CHECK(third.evidence == "no match");
    CHECK(classify_party(dest_of("Baidu"), nullptr, PartyPolicyMap{}).party == Party::Third);
    // label-aligned suffix only
    CHECK(classify_party(dest_of("X", {"evilaliyuncs.com"}), &speaker, policy).party == Party::Third);
}

TEST_CASE("policy scoping and validation") {
    auto policy = PartyPolicyMap::from_json(Json::parse(
        R"({"entries":[{"pattern":"video.qq.com","brands":["Xiaomi"],"source":"sdk list"}]})"));
    auto xiaomi = device("a", "speaker", {}, "Xiaomi");
    auto other = device("b", "speaker", {}, "Tmall");
    CHECK(classify_party(dest_of("Tencent", {"vv.video.qq.com"}), &xiaomi, policy).party == Party::Support);
    CHECK(classify_party(dest_of("Tencent", {"vv.video.qq.com"}), &other, policy).party == Party::Third);
    CHECK_THROWS_AS(PartyPolicyMap::from_json(Json::parse(R"({"entries":[{"pattern":"x.com"}]})")), ValidationError);
}

TEST_CASE("proportions: hand arithmetic") {
    auto t = proportion_table({{"d1", {{"CN", 100}}}, {"d2", {{"CN", 50}, {"US", 50}}}},
                              {{"d1", "camera"}, {"d2", "camera"}});
    CHECK(t.categories["camera"]["CN"] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(t.categories["camera"]["US"] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(t.overall_raw_bytes["CN"] == doctest::Approx(150.0 / 200.0));
    auto single = proportion_table({{"d", {{"CN", 7}}}}, {{"d", "plug"}});
    CHECK(single.categories["plug"]["CN"] == 1.0);
    auto empty = proportion_table({{"d", {}}, {"e", {{"US", 3}}}}, {{"d", "plug"}, {"e", "plug"}});
    CHECK(empty.warnings.size() == 1);
    CHECK(empty.categories["plug"]["US"] == 1.0);
}

TEST_CASE("proportions match the brute-force oracle and ignore per-device scale") {
    std::mt19937_64 rng(99);
    const std::vector<std::string> countries{"CN", "US", "HK", "JP", "UNKNOWN"};
    const std::vector<std::string> cats{"camera", "plug", "sensor"};
    for (int corpus = 0; corpus < 10; ++corpus) {
        std::vector<ByteObservation> obs;
        std::vector<DeviceTraffic> traffic;
        DestinationIndex idx;
        for (int d = 0; d < 10; ++d) {
            DeviceTraffic dt;
            dt.device = device("dev" + std::to_string(d), cats[rng() % cats.size()]);
            const int flows = 1 + static_cast<int>(rng() % 6);
            for (int k = 0; k < flows; ++k) {
                const auto& country = countries[rng() % countries.size()];
                const auto server = "47.0." + std::to_string(d) + "." + std::to_string(k + 1);
                const std::uint64_t bytes = 1 + rng() % 1'000'000;
                dt.flows.push_back(flow_to(server, bytes));
                DestinationRecord r;
                r.device_id = dt.device.device_id;
                r.ip = IpAddress::require(server);
                r.country = country;
                idx[{r.device_id, r.ip}] = r;
                obs.push_back({dt.device.device_id, dt.device.category, country, bytes});
            }
            traffic.push_back(std::move(dt));
        }
        auto expected = category_share_oracle(obs);
        auto table = proportion_table(traffic, idx);
        for (const auto& [cat, shares] : expected) {
            double sum = 0;
            for (const auto& [c, v] : shares) {
                CHECK(table.categories[cat][c] == doctest::Approx(v).epsilon(1e-9));
                sum += table.categories[cat][c];
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
        for (auto& f : traffic[0].flows) f.bytes_total *= 13;
        auto scaled = proportion_table(traffic, idx);
        for (const auto& [cat, shares] : table.categories)
            for (const auto& [c, v] : shares) CHECK(scaled.categories[cat][c] == doctest::Approx(v).epsilon(1e-12));
    }
}

TEST_CASE("payload unit and phase filter") {
    DeviceTraffic dt{device("d", "camera"), {flow_to("8.8.8.8", 100, PhaseLabel::Setup), flow_to("47.100.0.1", 300, PhaseLabel::Idle)}};
    DestinationIndex idx;
    idx[{"d", IpAddress::require("8.8.8.8")}].country = "US";
    idx[{"d", IpAddress::require("47.100.0.1")}].country = "CN";
    auto setup = proportion_table({dt}, idx, ByteUnit::Wire, PhaseLabel::Setup);
    CHECK(setup.categories["camera"]["US"] == 1.0);
    auto all = proportion_table({dt}, idx, ByteUnit::Payload);
    CHECK(all.categories["camera"]["US"] == doctest::Approx(0.25));
}

TEST_CASE("server party counts") {
    DeviceTraffic dt{device("d", "camera"),
                     {flow_to("47.100.0.1", 1, PhaseLabel::Setup), flow_to("47.100.0.2", 1, PhaseLabel::Setup),
                      flow_to("47.100.0.3", 1, PhaseLabel::Setup), flow_to("47.100.0.1", 1, PhaseLabel::Idle)}};
    DestinationIndex idx;
    for (int i = 1; i <= 3; ++i) {
        auto& r = idx[{"d", IpAddress::require("47.100.0." + std::to_string(i))}];
        r.party = Party::First;
    }
    auto t = server_party_counts({dt}, idx);
    CHECK(t.at("SETUP", "camera", Party::First) == 3.0);
    CHECK(t.at("IDLE", "camera", Party::First) == 1.0);
    CHECK(t.at("TOTAL", "camera", Party::First) == 3.0);
    CHECK(t.at("DELETION", "camera", Party::Support) == 0.0);
}

TEST_CASE("camera setup row built from 29 synthetic devices") {
    // targets 3.24 / 2.10 / 1.34 -> 94 / 61 / 39 servers spread over 29 devices
    const int totals[] = {94, 61, 39};
    constexpr Party parties[] = {Party::First, Party::Support, Party::Third};
    std::vector<DeviceTraffic> corpus;
    DestinationIndex idx;
    for (int d = 0; d < 29; ++d) corpus.push_back({device("cam" + std::to_string(d), "camera"), {}});
    int ip = 0;
    for (int p = 0; p < 3; ++p)
        for (int k = 0; k < totals[p]; ++k) {
            auto& dt = corpus[static_cast<std::size_t>((k * 7 + p) % 29)];
            const auto server = "47.101." + std::to_string(ip / 250) + "." + std::to_string(1 + ip % 250);
            ++ip;
            dt.flows.push_back(flow_to(server, 10, PhaseLabel::Setup));
            idx[{dt.device.device_id, IpAddress::require(server)}].party = parties[p];
        }
    auto t = server_party_counts(corpus, idx, table2_column);
    CHECK(t.at("SETUP", "camera", Party::First) == doctest::Approx(3.24).epsilon(0.01 / 3.24));
    CHECK(std::abs(t.at("SETUP", "camera", Party::Support) - 2.10) <= 0.01);
    CHECK(std::abs(t.at("SETUP", "camera", Party::Third) - 1.34) <= 0.01);
    CHECK(t.column_devices["camera"] == 29);
}

TEST_CASE("organization ranking") {
    std::vector<DestinationRecord> recs;
    for (const auto* dev : {"a", "b", "c"}) {
        DestinationRecord r;
        r.device_id = dev;
        r.organization = "Google";
        recs.push_back(r);
        recs.push_back(r); // second endpoint, same org
    }
    auto ranking = organization_ranking(recs);
    REQUIRE(ranking.size() == 1);
    CHECK(ranking[0].devices == 3);
    CHECK(organization_ranking({}).empty());

    DestinationRecord x;
    x.device_id = "a";
    x.organization = "Zeta";
    recs.push_back(x);
    x.organization = "Alpha";
    recs.push_back(x);
    x.organization = "UNKNOWN";
    recs.push_back(x);
    ranking = organization_ranking(recs);
    REQUIRE(ranking.size() == 3);
    CHECK(ranking[1].organization == "Alpha");
    CHECK(ranking[2].organization == "Zeta");
}
