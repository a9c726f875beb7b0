mod common;

use std::collections::BTreeSet;

use axum::http::StatusCode;
use serde_json::{json, Value};

use common::*;
use muqar_core::taxonomy::{validate_taxonomy, Taxonomy, TaxonomySpec};
use muqar_core::trend::{build_attribute_series, AgeGroup, Demographic, Gender, Week};
use muqar_server::api::{ForecastRequest, ForecastResponse};

fn rt() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .unwrap()
}

#[test]
fn health_and_forecast_need_an_active_model() {
    let fx = fixture();
    rt().block_on(async {
        let (s, h) = call(&fx.state, "GET", "/healthz", None).await;
        assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
        assert!(h["model_version"].is_null());
        let (s, e) = call(&fx.state, "POST", "/v1/forecast", Some(&basic_request(&fx))).await;
        assert_eq!(s, StatusCode::CONFLICT);
        assert_eq!(e["error"], "no_active_model");

        let (s, _) = call(&fx.state, "POST", "/v1/models/activate", Some(&json!({"version": "v1"}))).await;
        assert_eq!(s, StatusCode::OK);
        let (s, h) = call(&fx.state, "GET", "/healthz", None).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(h["model_version"], "v1");
        assert_eq!(h["taxonomy_hash"], fx.taxonomy().hash());
        assert_eq!(h["weeks_loaded"], 104);
    });
}

#[test]
fn forecast_contract() {
    let fx = fixture();
    let response_schema = schema("forecast_response.schema.json");
    let request_schema = schema("forecast_request.schema.json");
    let error_schema = schema("error.schema.json");
    fx.state.activate("v1").unwrap();
    rt().block_on(async {
        let req = basic_request(&fx);
        assert!(request_schema.is_valid(&req));
        let (s, r) = call(&fx.state, "POST", "/v1/forecast", Some(&req)).await;
        assert_eq!(s, StatusCode::OK, "{r}");
        assert!(response_schema.is_valid(&r), "{r}");
        assert_eq!(r["popularity"].as_array().unwrap().len(), K);
        assert_eq!(r["used_feature_source"], "provided");
        assert_eq!(r["model_version"], "v1");
        let ctx = r["per_attribute_context"].as_array().unwrap();
        assert_eq!(ctx.len(), 2);
        assert_eq!(ctx[0]["values"].as_array().unwrap().len(), N);
        // context is the n weeks before the target, matching the library series
        let target = Week::from_date("2021-03-03".parse().unwrap());
        assert_eq!(ctx[0]["weeks"][N - 1], target.offset(-1).to_string());
        let attr = ctx[0]["attribute"].as_str().unwrap();
        let series = build_attribute_series(&fx.store, attr, None, None).unwrap();
        assert_eq!(ctx[0]["values"][N - 1].as_f64().unwrap(), series.value_at(target.offset(-1)).unwrap());

        // the raw model output, clamped, is what the service returns
        let typed: ForecastRequest = serde_json::from_value(req.clone()).unwrap();
        let direct = fx.state.forecast(&typed).unwrap();
        let via_http: ForecastResponse = serde_json::from_value(r.clone()).unwrap();
        assert_eq!(direct, via_http);

        // horizon truncates
        let mut h = req.clone();
        h["horizon"] = json!(1);
        let (s, r1) = call(&fx.state, "POST", "/v1/forecast", Some(&h)).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(r1["popularity"].as_array().unwrap()[..], r["popularity"].as_array().unwrap()[..1]);
        for bad in [0, K + 1] {
            h["horizon"] = json!(bad);
            let (s, e) = call(&fx.state, "POST", "/v1/forecast", Some(&h)).await;
            assert_eq!(s, StatusCode::BAD_REQUEST);
            assert_eq!(e["error"], "invalid_horizon");
            assert!(error_schema.is_valid(&e));
        }
    });
}

#[test]
fn feature_sources() {
    let fx = fixture();
    fx.state.activate("v1").unwrap();
    rt().block_on(async {
        let mut req = basic_request(&fx);
        req["garment"].as_object_mut().unwrap().remove("visual_features");
        let (s, r) = call(&fx.state, "POST", "/v1/forecast", Some(&req)).await;
        assert_eq!(s, StatusCode::OK, "{r}");
        assert_eq!(r["used_feature_source"], "category_prototype");

        // a thumbnail takes the prototype path too
        req["garment"]["thumbnail"] = json!("iVBORw0KGgo=");
        let (s, t) = call(&fx.state, "POST", "/v1/forecast", Some(&req)).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(t, r);

        req["garment"]["thumbnail"] = json!("not base64!");
        let (s, e) = call(&fx.state, "POST", "/v1/forecast", Some(&req)).await;
        assert_eq!((s, e["error"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_thumbnail")));

        let mut both = basic_request(&fx);
        both["garment"]["thumbnail"] = json!("iVBORw0KGgo=");
        let (s, e) = call(&fx.state, "POST", "/v1/forecast", Some(&both)).await;
        assert_eq!((s, e["error"].as_str()), (StatusCode::BAD_REQUEST, Some("conflicting_features")));

        let mut short = basic_request(&fx);
        short["garment"]["visual_features"] = json!([0.1, 0.2]);
        let (s, e) = call(&fx.state, "POST", "/v1/forecast", Some(&short)).await;
        assert_eq!((s, e["error"].as_str()), (StatusCode::BAD_REQUEST, Some("feature_dimension")));
    });
}

#[test]
fn label_errors_name_the_offender() {
    let fx = fixture();
    fx.state.activate("v1").unwrap();
    rt().block_on(async {
        let bad = fx.illegal_attribute(0);
        let mut req = basic_request(&fx);
        req["garment"]["attributes"] = json!([bad]);
        let (s, e) = call(&fx.state, "POST", "/v1/forecast", Some(&req)).await;
        assert_eq!(s, StatusCode::BAD_REQUEST);
        assert_eq!(e["error"], "illegal_label_set");
        let paths: Vec<&str> = e["violations"].as_array().unwrap().iter().map(|v| v["path"].as_str().unwrap()).collect();
        assert!(paths.iter().any(|p| p.contains(&bad)), "{e}");

        req["garment"]["attributes"] = json!(["no-such-attribute"]);
        let (s, e) = call(&fx.state, "POST", "/v1/forecast", Some(&req)).await;
        assert_eq!(s, StatusCode::BAD_REQUEST);
        assert_eq!(e["violations"][0]["path"], "attributes/no-such-attribute");

        req["garment"]["category"] = json!("no-such-category");
        let (s, e) = call(&fx.state, "POST", "/v1/forecast", Some(&req)).await;
        assert_eq!(s, StatusCode::BAD_REQUEST);
        assert_eq!(e["violations"][0]["path"], "category/no-such-category");
    });
}

#[test]
fn malformed_bodies_are_json_400s() {
    let fx = fixture();
    fx.state.activate("v1").unwrap();
    rt().block_on(async {
        let mut req = basic_request(&fx);
        req["surprise"] = json!(1);
        let (s, e) = call(&fx.state, "POST", "/v1/forecast", Some(&req)).await;
        assert_eq!((s, e["error"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_body")));
        let mut req = basic_request(&fx);
        req["target_date"] = json!("2021-13-01");
        let (s, e) = call(&fx.state, "POST", "/v1/forecast", Some(&req)).await;
        assert_eq!((s, e["error"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_body")));
        let (s, e) = call(&fx.state, "POST", "/v1/forecast", Some(&json!("text"))).await;
        assert_eq!((s, e["error"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_body")));
    });
}

#[test]
fn trend_history_errors_are_422() {
    let fx = fixture();
    fx.state.activate("v1").unwrap();
    rt().block_on(async {
        for (date, code) in [("2020-01-13", "insufficient_history"), ("2023-06-05", "beyond_trends")] {
            let mut req = basic_request(&fx);
            req["target_date"] = json!(date);
            let (s, e) = call(&fx.state, "POST", "/v1/forecast", Some(&req)).await;
            assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{date}: {e}");
            assert_eq!(e["error"], code);
        }
    });
}

#[test]
fn demographic_models_require_a_stratum() {
    let fx = fixture();
    fx.state.activate("dem").unwrap();
    rt().block_on(async {
        let mut req = basic_request(&fx);
        let (s, e) = call(&fx.state, "POST", "/v1/forecast", Some(&req)).await;
        assert_eq!((s, e["error"].as_str()), (StatusCode::BAD_REQUEST, Some("missing_demographic")));
        req["demographic"] = json!({"gender": "women", "age_group": "25-30"});
        let (s, r) = call(&fx.state, "POST", "/v1/forecast", Some(&req)).await;
        assert_eq!(s, StatusCode::OK, "{r}");
        req["demographic"] = json!({"gender": "men", "age_group": "unknown"});
        let (s, _) = call(&fx.state, "POST", "/v1/forecast", Some(&req)).await;
        assert_eq!(s, StatusCode::BAD_REQUEST);
    });
}

#[test]
fn identical_requests_get_identical_responses() {
    let fx = fixture();
    fx.state.activate("v2").unwrap();
    rt().block_on(async {
        let req = basic_request(&fx);
        let (_, a) = call(&fx.state, "POST", "/v1/forecast", Some(&req)).await;
        let (_, b) = call(&fx.state, "POST", "/v1/forecast", Some(&req)).await;
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    });
    // a fresh service over the same registry and store agrees too
    let again = muqar_server::AppState::new(fx.store.clone(), fx.state.registry().clone()).unwrap();
    again.activate("v2").unwrap();
    let req: ForecastRequest = serde_json::from_value(basic_request(&fx)).unwrap();
    assert_eq!(again.forecast(&req).unwrap(), fx.state.forecast(&req).unwrap());
}

#[test]
fn trends_endpoint_matches_the_library() {
    let fx = fixture();
    rt().block_on(async {
        let tax = fx.taxonomy();
        let attr = tax.attribute_name(3).to_string();
        let (s, full) = call(&fx.state, "GET", &format!("/v1/trends/{attr}"), None).await;
        assert_eq!(s, StatusCode::OK, "{full}");
        let lib = build_attribute_series(&fx.store, &attr, None, None).unwrap();
        assert_eq!(full, serde_json::to_value(lib.export()).unwrap());
        assert_eq!(full["weeks"].as_array().unwrap().len(), 104);

        for dem in [
            Demographic::new(Gender::Women, AgeGroup::From18To25),
            Demographic::new(Gender::Men, AgeGroup::Over55),
        ] {
            let uri = format!(
                "/v1/trends/{attr}?from=2020-06-01&to=2021-02-28&gender={}&age_group={}",
                dem.gender.as_str(),
                dem.age_group.as_str().replace('<', "%3C").replace('>', "%3E")
            );
            let (s, got) = call(&fx.state, "GET", &uri, None).await;
            assert_eq!(s, StatusCode::OK, "{got}");
            let from = Week::from_date("2020-06-01".parse().unwrap());
            let to = Week::from_date("2021-02-28".parse().unwrap());
            let lib = build_attribute_series(&fx.store, &attr, Some(dem), Some((from, to))).unwrap();
            assert_eq!(got, serde_json::to_value(lib.export()).unwrap());
        }

        let (s, _) = call(&fx.state, "GET", "/v1/trends/unknown", None).await;
        assert_eq!(s, StatusCode::NOT_FOUND);
        let (s, _) = call(&fx.state, "GET", &format!("/v1/trends/{attr}?gender=men"), None).await;
        assert_eq!(s, StatusCode::BAD_REQUEST);
        let (s, _) = call(&fx.state, "GET", &format!("/v1/trends/{attr}?gender=robots&age_group=18-25"), None).await;
        assert_eq!(s, StatusCode::BAD_REQUEST);
        let (s, e) = call(&fx.state, "GET", &format!("/v1/trends/{attr}?from=2021-01-01&to=2020-01-01"), None).await;
        assert_eq!((s, e["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("empty_period")));
    });
}

#[test]
fn taxonomy_payload_round_trips() {
    let fx = fixture();
    fx.state.activate("v1").unwrap();
    rt().block_on(async {
        let (s, t) = call(&fx.state, "GET", "/v1/taxonomy", None).await;
        assert_eq!(s, StatusCode::OK);
        let spec: TaxonomySpec = serde_json::from_value(t.clone()).unwrap();
        validate_taxonomy(&spec).unwrap();
        let tax = Taxonomy::new(spec).unwrap();
        assert_eq!(t["hash"], tax.hash());
        assert_eq!(t["hash"], fx.model("v1").meta().taxonomy_hash);
        for (i, c) in tax.spec().categories.iter().enumerate() {
            assert_eq!(t["indices"]["categories"][&c.name], i);
        }
        for (i, a) in tax.spec().attributes.iter().enumerate() {
            assert_eq!(t["indices"]["attributes"][&a.name], i);
        }
    });
}

#[test]
fn activation_errors() {
    let fx = fixture();
    rt().block_on(async {
        for (body, status) in [
            (json!({"version": "missing"}), StatusCode::NOT_FOUND),
            (json!({"version": "../etc"}), StatusCode::NOT_FOUND),
            (json!({"version": "alien"}), StatusCode::CONFLICT),
            (json!({}), StatusCode::BAD_REQUEST),
        ] {
            let (s, e) = call(&fx.state, "POST", "/v1/models/activate", Some(&body)).await;
            assert_eq!(s, status, "{body}: {e}");
        }
        assert!(fx.state.active().is_none());
        let (_, m) = call(&fx.state, "GET", "/v1/models", None).await;
        assert_eq!(m["versions"], json!(["alien", "dem", "v1", "v2"]));
        assert!(m["active"].is_null());

        let (s, a) = call(&fx.state, "POST", "/v1/models/activate", Some(&json!({"version": "v2"}))).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(a["model_version"], "v2");
        let (_, r) = call(&fx.state, "POST", "/v1/forecast", Some(&basic_request(&fx))).await;
        assert_eq!(r["model_version"], "v2");
    });
}

/// 100 concurrent forecasts while the active model flips between two
/// versions: every response must equal that version's own answer.
#[test]
fn concurrent_activation_never_tears() {
    let fx = fixture();
    fx.state.activate("v1").unwrap();
    let req: ForecastRequest = serde_json::from_value(basic_request(&fx)).unwrap();
    let expected = |v: &str| {
        let s = muqar_server::AppState::new(fx.store.clone(), fx.state.registry().clone()).unwrap();
        s.activate(v).unwrap();
        s.forecast(&req).unwrap()
    };
    let (e1, e2) = (expected("v1"), expected("v2"));
    assert_ne!(e1.popularity, e2.popularity);
    rt().block_on(async {
        let body = basic_request(&fx);
        let mut tasks = Vec::new();
        for i in 0..100 {
            let state = fx.state.clone();
            let body = body.clone();
            tasks.push(tokio::spawn(async move {
                if i % 10 == 5 {
                    let v = if i % 20 == 5 { "v2" } else { "v1" };
                    call(&state, "POST", "/v1/models/activate", Some(&json!({"version": v}))).await;
                }
                call(&state, "POST", "/v1/forecast", Some(&body)).await
            }));
        }
        let mut seen = BTreeSet::new();
        for t in tasks {
            let (s, r) = t.await.unwrap();
            assert_eq!(s, StatusCode::OK);
            let r: ForecastResponse = serde_json::from_value(r).unwrap();
            let want = if r.model_version == "v1" { &e1 } else { &e2 };
            assert_eq!(&r, want);
            seen.insert(r.model_version);
        }
        assert!(!seen.is_empty());
    });
}

#[test]
fn legal_label_sets_never_get_400() {
    use proptest::prelude::*;
    use proptest::test_runner::{Config, TestRunner};

    let fx = fixture();
    fx.state.activate("v1").unwrap();
    let rt = rt();
    let (_, payload) = rt.block_on(call(&fx.state, "GET", "/v1/taxonomy", None));
    // Names come from the taxonomy payload, as a client would use them.
    let spec: TaxonomySpec = serde_json::from_value(payload).unwrap();
    let tax = Taxonomy::new(spec).unwrap();
    let nc = tax.num_categories();
    let mut runner = TestRunner::new(Config::with_cases(200));
    runner
        .run(&(0..nc, proptest::collection::vec(any::<prop::sample::Index>(), 0..4), 0u32..600), |(c, picks, day)| {
            let legal = tax.legal_attributes(tax.category_parent(c));
            let mut attrs: Vec<String> = picks.iter().map(|i| tax.attribute_name(legal[i.index(legal.len())]).to_string()).collect();
            attrs.sort();
            attrs.dedup();
            let date = chrono::NaiveDate::from_ymd_opt(2020, 1, 6).unwrap() + chrono::Duration::days(day as i64);
            let body: Value = json!({
                "garment": {"category": tax.category_name(c), "attributes": attrs},
                "target_date": date.to_string(),
            });
            let (s, r) = rt.block_on(call(&fx.state, "POST", "/v1/forecast", Some(&body)));
            prop_assert_ne!(s, StatusCode::BAD_REQUEST, "{} -> {}", body, r);
            if s == StatusCode::OK {
                let p = r["popularity"].as_array().unwrap();
                prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(&v.as_f64().unwrap())));
            }
            Ok(())
        })
        .unwrap();
}
