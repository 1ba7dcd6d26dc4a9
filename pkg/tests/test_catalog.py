from __future__ import annotations

import pytest

from moascan.catalog import (
    GroundTruth,
    VulnerabilityList,
    builtin_expanded_list,
    builtin_vuldroid_list,
    fold_name,
    load_ground_truth,
    normalize_name,
    parse_catalog,
    path_matches,
    resolve_list,
)
from moascan.errors import AmbiguousAliasError, CatalogParseError, DuplicateIdError, UnknownVulnError


def test_fold_name_ignores_case_and_punctuation():
    assert fold_name("Webview Xss via DeepLink") == fold_name("WebView XSS via Deep-Link")
    assert fold_name("  Steal Files (XHR) ") == "stealfilesxhr"


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("Webview Xss via DeepLink", "webview-xss-deeplink"),
        ("FileAccessVulnerability", "steal-files-webview-xhr"),
        ("Information Leakage via Implicit Intent", "reading-user-email-broadcasts"),
        ("Steal Password ResetTokens/MagicLoginLink", "steal-password-reset-tokens"),
        ("Steal Files via Webview using XHR request", "steal-files-webview-xhr"),
        ("Command Injection Vulnerability", "command-injection"),
        ("ssrf", "ssrf"),
        ("Totally Unknown Issue", None),
        ("", None),
    ],
)
def test_normalize_name(catalog, raw, expected):
    assert normalize_name(raw, catalog) == expected


def test_every_canonical_name_maps_to_itself(catalog):
    for vid, vt in catalog.items():
        assert normalize_name(vt.canonical_name, catalog) == vid
        for alias in vt.aliases:
            assert normalize_name(alias, catalog) == vid


def test_ambiguous_alias_is_an_error():
    text = """
vulnerabilities:
  - {id: a, canonical_name: Alpha, aliases: [Shared], description: x}
  - {id: b, canonical_name: Beta, aliases: [shared!], description: y}
"""
    cat = parse_catalog(text)
    with pytest.raises(AmbiguousAliasError) as info:
        normalize_name("SHARED", cat)
    assert info.value.matches == ["a", "b"]


def test_duplicate_id_reports_line():
    text = """vulnerabilities:
  - {id: a, canonical_name: Alpha, description: x}
  - {id: a, canonical_name: Other, description: y}
"""
    with pytest.raises(DuplicateIdError, match=r":3: duplicate id"):
        parse_catalog(text)


def test_malformed_catalog():
    with pytest.raises(CatalogParseError):
        parse_catalog("vulnerabilities: [")


def test_builtin_lists(catalog):
    vuldroid = builtin_vuldroid_list().validate(catalog)
    expanded = builtin_expanded_list().validate(catalog)
    assert len(vuldroid) == 8
    assert len(expanded) == 22
    assert set(vuldroid.members) <= set(expanded.members)
    assert resolve_list("expanded", catalog) == expanded


def test_list_from_file(tmp_path, catalog):
    p = tmp_path / "lists.yaml"
    p.write_text("mine:\n  - ssrf\n  - open-redirect\nother: [ssrf]\n")
    assert resolve_list(f"{p}:mine", catalog).members == ("ssrf", "open-redirect")
    with pytest.raises(CatalogParseError):
        resolve_list(str(p), catalog)


def test_list_with_unknown_member(catalog):
    with pytest.raises(UnknownVulnError):
        VulnerabilityList("x", ("no-such-id",)).validate(catalog)


def test_path_suffix_rule():
    assert path_matches("src/a/NotesViewer.java", "NotesViewer.java")
    assert path_matches("src/a/NotesViewer.java", "a/NotesViewer.java")
    assert not path_matches("src/a/MyNotesViewer.java", "NotesViewer.java")


def test_bundled_ground_truth(settings, catalog):
    truth = load_ground_truth(settings.ground_truth_path, catalog)
    assert len(truth.headline_ids) == 8
    assert truth.contains("insecure-input-validation", "x/NotesViewer.java")
    assert "insecure-input-validation" not in truth.headline_ids
    assert truth.files_for("reading-user-email-broadcasts") == ["EmailViewer.java", "MyReceiver.java"]


def test_ground_truth_rejects_unknown_ids(tmp_path, catalog):
    p = tmp_path / "t.yaml"
    p.write_text("entries:\n  nope: [A.java]\n")
    with pytest.raises(UnknownVulnError):
        load_ground_truth(p, catalog)


def test_ground_truth_defaults_headline_to_all_entries():
    truth = GroundTruth(frozenset({("a", "X.java")}))
    assert truth.headline_ids == {"a"}
