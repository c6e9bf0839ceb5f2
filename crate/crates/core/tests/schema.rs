use std::path::PathBuf;

use histoctx::schema::{cell_schema, region_schema, schema_markdown};

fn doc_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/feature_schema.md")
}

/// Set `HISTOCTX_BLESS=1` to rewrite the document after a schema change.
#[test]
fn shipped_document_matches_the_library() {
    let expected = schema_markdown();
    if std::env::var_os("HISTOCTX_BLESS").is_some() {
        std::fs::write(doc_path(), &expected).unwrap();
    }
    let shipped = std::fs::read_to_string(doc_path()).unwrap();
    assert!(shipped == expected, "docs/feature_schema.md is stale; rerun with HISTOCTX_BLESS=1");
}

#[test]
fn family_blocks_sit_at_fixed_offsets() {
    let r = region_schema();
    let families: Vec<&str> = r.iter().map(|d| d.family).collect();
    let blocks = [(0, 7), (7, 19), (19, 78), (78, 85)];
    for (lo, hi) in blocks {
        assert!(families[lo..hi].iter().all(|&f| f == families[lo]), "block {lo}..{hi}");
    }
    assert_eq!(families.iter().collect::<std::collections::BTreeSet<_>>().len(), 4);
    let c = cell_schema();
    assert_eq!(c[0].name, "area");
    assert_eq!(c.len(), 98);
    assert!(c[94..].iter().all(|d| d.family == c[94].family));
}
