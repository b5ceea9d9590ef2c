use orderpick_web::{layout_json, tsp_json, Demo};
use serde_json::Value;

#[test]
fn layout_lists_every_location() {
    let v: Value = serde_json::from_str(&layout_json("tiny").unwrap()).unwrap();
    let locs = v["locations"].as_array().unwrap();
    assert_eq!(locs.iter().filter(|l| l[2] == "slot").count(), 10);
    assert_eq!(locs.iter().filter(|l| l[2] == "station").count(), 1);
    assert!(!v["edges"].as_array().unwrap().is_empty());
    assert!(layout_json("nope").is_err());
}

#[test]
fn simulation_runs_to_completion() {
    for policy in ["fm", "pdm", "random"] {
        let mut demo = Demo::new("tiny", policy, 3).unwrap();
        let mut last = 0;
        for _ in 0..200 {
            demo.step(5).unwrap();
            let v: Value = serde_json::from_str(&demo.snapshot_json().unwrap()).unwrap();
            let tick = v["tick"].as_u64().unwrap();
            assert!(tick >= last);
            last = tick;
            assert_eq!(v["workers"].as_array().unwrap().len(), 3);
            if v["done"].as_bool().unwrap() {
                break;
            }
        }
        let v: Value = serde_json::from_str(&demo.snapshot_json().unwrap()).unwrap();
        assert!(v["done"].as_bool().unwrap(), "{policy} did not finish");
        if policy != "random" {
            assert_eq!(v["orders_completed"], v["total_orders"]);
        }
    }
    assert!(Demo::new("tiny", "hsnac", 0).is_err());
}

#[test]
fn two_opt_is_no_longer_than_nearest_neighbour() {
    for seed in 0..20 {
        let v: Value = serde_json::from_str(&tsp_json("tiny", 6, seed).unwrap()).unwrap();
        assert!(v["two_opt_m"].as_f64().unwrap() <= v["nearest_neighbour_m"].as_f64().unwrap() + 1e-9);
        assert_eq!(v["two_opt"].as_array().unwrap().len(), 7);
    }
    assert!(tsp_json("tiny", 11, 0).is_err());
}
