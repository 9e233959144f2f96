use hetlb::PolicyId;
use hetlb_cli::{parse_config, ConfigErrorKind, Kind};

#[test]
fn minimal_fig1_gets_defaults() {
    let cfgs = parse_config("[light]\nkind = fig1\n").unwrap();
    let c = &cfgs[0];
    assert_eq!(c.name, "light");
    assert_eq!(c.kind, Kind::Fig1);
    assert_eq!(c.ns, vec![1000]);
    assert_eq!(c.arrivals, 300_000);
    assert_eq!(c.warmup, 0.5);
    assert_eq!(c.seeds, 5);
    assert_eq!(c.policies, vec![PolicyId::Jsq, PolicyId::SaJsq]);
    assert_eq!(c.lambdas.len(), 9);
}

#[test]
fn lambda_grid_has_nine_points() {
    let c = &parse_config("[a]\nkind = fig1\nlambda = 0.1:0.9:0.1\n").unwrap()[0];
    assert_eq!(c.lambdas.len(), 9);
    assert_eq!(c.lambdas[0], 0.1);
    assert_eq!(c.lambdas[8], 0.9);
}

#[test]
fn unknown_key_is_named_with_its_line() {
    let e = parse_config("[a]\nkind = fig1\nspeed_of_light = 3e8\n").unwrap_err();
    assert_eq!(e.line, 3);
    assert_eq!(e.kind, ConfigErrorKind::UnknownKey("speed_of_light".into()));
    assert!(e.to_string().contains("speed_of_light"));
}

#[test]
fn type_mismatch_names_key_and_value() {
    let e = parse_config("[a]\nkind = fig1\n\nseeds = many\n").unwrap_err();
    assert_eq!(e.line, 4);
    match e.kind {
        ConfigErrorKind::TypeMismatch { key, found, .. } => {
            assert_eq!(key, "seeds");
            assert_eq!(found, "many");
        }
        other => panic!("unexpected {other:?}"),
    }
    let e = parse_config("[a]\nkind = fig1\nlambda = low\n").unwrap_err();
    assert!(matches!(e.kind, ConfigErrorKind::TypeMismatch { .. }));
}

#[test]
fn missing_kind_is_reported_for_the_section() {
    let e = parse_config("# nothing\n[orphan]\nn = 10\n").unwrap_err();
    assert_eq!(e.line, 2);
    assert_eq!(e.kind, ConfigErrorKind::MissingRequired { section: "orphan".into(), key: "kind" });
}

#[test]
fn invalid_values() {
    for text in [
        "[a]\nkind = fig9\n",
        "[a]\nkind = fig1\nlambda = 0.5:1.2:0.1\n",
        "[a]\nkind = fig1\nwarmup = 1.5\n",
        "[a]\nkind = fig1\nspeeds = 1, 2, 3\n",
        "[a]\nkind = fig1\npolicies = jsq best\n",
        "[a]\nkind = fig1\nseeds = 0\n",
    ] {
        let e = parse_config(text).unwrap_err();
        assert!(matches!(e.kind, ConfigErrorKind::InvalidValue { .. }), "{text:?} gave {e}");
    }
    assert!(matches!(parse_config("kind = fig1\n").unwrap_err().kind, ConfigErrorKind::Syntax(_)));
    assert!(matches!(parse_config("[a]\nkind fig1\n").unwrap_err().kind, ConfigErrorKind::Syntax(_)));
}

#[test]
fn policy_lists_keep_commas_inside_names() {
    let c = &parse_config("[a]\nkind = fig3a\npolicies = sa-jsq sq2:2,2 sq:d=3\n").unwrap()[0];
    assert_eq!(c.policies, vec![PolicyId::SaJsq, PolicyId::SqPerPool(vec![2, 2]), PolicyId::SqD(3)]);
}

#[test]
fn kind_specific_defaults() {
    let cfgs = parse_config("[a]\nkind = fig2\n[b]\nkind = fig3b\n[c]\nkind = fig3a\n").unwrap();
    assert_eq!(cfgs[0].ns, vec![50]);
    assert_eq!(cfgs[0].policies, vec![PolicyId::Sed, PolicyId::SaJsq]);
    assert_eq!(cfgs[1].ns, vec![50, 100, 200, 400]);
    assert_eq!(cfgs[1].lambdas, vec![0.5, 0.7, 0.9]);
    assert_eq!(cfgs[1].speeds, vec![4.0 / 3.0, 2.0 / 3.0]);
    assert_eq!(cfgs[2].policies.len(), 3);
}
