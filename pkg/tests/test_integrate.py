from __future__ import annotations

import pytest

from catamerge import (
    IdentificationCollision,
    SchemaError,
    combine_schemas,
    delta_project,
    instances_same_data,
    new_instance,
    roundtrip_report,
    sigma_insert,
    validate_extension,
    validate_schema,
)
from catamerge.schema import (
    Attribute,
    ExtensionSpec,
    Identification,
    Schema,
)
from catamerge.schema import Const
from catamerge.typeside import BaseType


def test_combined_example1_equipment_signature(example1):
    _, combined, _ = example1
    schema = combined.schema
    attrs = {a.name for a in schema.attrs_of("Equipment")}
    assert attrs == {
        "equipmentName", "equipmentType", "equipmentIdentifier", "elementName", "elementType"
    }
    fks = {fk.name: fk.target for fk in schema.fks_of("Equipment")}
    assert fks["hasLocation"] == "Location"
    assert fks["elementInSpace"] == "Location"
    assert fks["hasPoint"] == "BRICK_Point"
    assert fks["feeds"] == "BRICK_Zone"


def test_combined_example2_location_signature(example2):
    _, combined, _ = example2
    attrs = [a.name for a in combined.schema.attrs_of("Location")]
    assert attrs == ["spaceName", "spaceArea", "locationName", "roomName", "roomArea"]


def test_combined_prefixes_non_identified_entities(example2):
    _, combined, _ = example2
    assert set(combined.schema.entities) == {
        "Location", "Equipment", "IFC_IfcSensor", "IFC_PropertySet", "BRICK_Point",
        "BRICK_Zone", "BRICK_Meter", "BRICK_SetPoint", "REC_Person", "REC_Lease",
    }


def test_combined_schema_is_valid(example1, example2):
    for _, combined, _ in (example1, example2):
        assert validate_schema(combined.schema).ok


def test_provenance_total_and_injective(example2):
    env, combined, _ = example2
    ext = env.extensions["CombinedThreeWay"]
    for s in ext.schemas:
        seen_entities = set()
        for e in s.entities:
            mapped = combined.combined_entity(s.name, e)
            assert mapped in combined.schema.entities
            seen_entities.add((e, mapped))
            member_images = set()
            for fk in s.fks_of(e):
                name = combined.combined_member(s.name, e, fk.name)
                assert combined.schema.fk(mapped, name) is not None
                member_images.add(name)
            for attr in s.attrs_of(e):
                name = combined.combined_member(s.name, e, attr.name)
                assert combined.schema.attr(mapped, name) is not None
                member_images.add(name)
            assert len(member_images) == len(s.fks_of(e)) + len(s.attrs_of(e))


def test_member_collision_disambiguated_by_prefix():
    a = Schema("A", ("X",), (), (Attribute("name", "X", BaseType.STRING),))
    b = Schema("B", ("Y",), (), (Attribute("name", "Y", BaseType.INT),))
    ext = ExtensionSpec("C", (a, b), (Identification("A", "X", "B", "Y"),))
    combined = combine_schemas(ext)
    attrs = {x.name for x in combined.schema.attrs_of("X")}
    assert attrs == {"A_name", "B_name"}


def test_identification_collision_on_ambiguous_entity_names():
    a = Schema("A", ("X", "Z"))
    b = Schema("B", ("Y", "Z"))
    # two separate classes would both be named Z
    ext = ExtensionSpec(
        "C", (a, b),
        (Identification("A", "X", "B", "Z"), Identification("A", "Z", "B", "Y")),
    )
    # both classes are first-mentioned under the bare name "Z"
    a2 = Schema("A", ("Z", "W"))
    b2 = Schema("B", ("Z", "Q"))
    ext2 = ExtensionSpec(
        "C", (a2, b2),
        (Identification("A", "Z", "B", "Q"), Identification("B", "Z", "A", "W")),
    )
    with pytest.raises(IdentificationCollision):
        combine_schemas(ext2)
    combine_schemas(ext)  # the unambiguous arrangement is accepted


def test_same_schema_identification_rejected():
    a = Schema("A", ("X", "Y"))
    ext = ExtensionSpec("C", (a,), (Identification("A", "X", "A", "Y"),))
    report = validate_extension(ext)
    assert not report.ok
    with pytest.raises(SchemaError):
        combine_schemas(ext)


def test_source_constraints_are_imported():
    from catamerge.parser import SourceDocument, parse_document

    text = """
schema A {
  entities X Y
  foreign_keys f : X -> Y  g : X -> Y
  constraints
    forall x : X -> x.f = x.g
}
extension E { include A }
"""
    env = parse_document(SourceDocument("t", text))
    assert env.ok, [str(d) for d in env.diagnostics]
    combined = combine_schemas(env.extensions["E"])
    assert len(combined.schema.constraints) == 1
    c = combined.schema.constraints[0]
    assert c.universals == (("x", "A_X"),)


def test_sigma_example2_counts(example2):
    _, combined, pre = example2
    counts = {e: len(pre.carrier(e)) for e in combined.schema.entities}
    assert counts["Location"] == 15  # 5 spaces + 5 locations + 5 rooms, pre-merge
    assert counts["Equipment"] == 10
    assert sum(counts.values()) == 61


def test_sigma_empty_sources(example1):
    env, combined, _ = example1
    pre = sigma_insert(combined, {})
    assert all(not pre.carrier(e) for e in combined.schema.entities)


def test_sigma_example1_is_relabelled_ifc(example1):
    env, combined, pre = example1
    ifc = env.instances["ifc_model"]
    for entity in ifc.schema.entities:
        combined_entity = combined.combined_entity("IFC", entity)
        got = [pre.export_id(r) for r in pre.carrier(combined_entity)]
        want = [f"IFC.{ifc.export_id(r)}" for r in ifc.carrier(entity)]
        assert got == want


def test_sigma_preserves_cardinalities(example2):
    env, combined, pre = example2
    ext = env.extensions["CombinedThreeWay"]
    sources = {
        "IFC": env.instances["ifc_model"],
        "BRICK": env.instances["brick_model"],
        "REC": env.instances["rec_model"],
    }
    for combined_entity, members in combined.class_members.items():
        expected = sum(len(sources[s].carrier(e)) for s, e in members)
        assert len(pre.carrier(combined_entity)) == expected


def test_delta_example2_rec_room_areas(example2_saturated):
    env, combined, _, result = example2_saturated
    rec = delta_project(combined, result.instance, env.schemas["REC"])
    rooms = {rec.export_id(r): rec.get_attr(r, "roomArea") for r in rec.carrier("Room")}
    assert rooms == {
        "rm_1": Const(BaseType.DOUBLE, 18.68),
        "rm_2": Const(BaseType.DOUBLE, 17.12),
        "rm_3": Const(BaseType.DOUBLE, 18.32),
        "rm_4": Const(BaseType.DOUBLE, 18.68),
        "rm_5": Const(BaseType.DOUBLE, 17.12),
    }


def test_delta_untouched_property_sets(example1_saturated):
    env, combined, _, result = example1_saturated
    ifc = delta_project(combined, result.instance, env.schemas["IFC"])
    original = env.instances["ifc_model"]
    got = {(ifc.export_id(r), str(ifc.get_attr(r, "deviceId"))) for r in ifc.carrier("PropertySet")}
    want = {
        (original.export_id(r), str(original.get_attr(r, "deviceId")))
        for r in original.carrier("PropertySet")
    }
    assert got == want


def test_delta_example1_brick_projection(example1_saturated):
    env, combined, _, result = example1_saturated
    brick = delta_project(combined, result.instance, env.schemas["BRICK"])
    assert len(brick.carrier("Equipment")) == 5
    assert len(brick.carrier("Location")) == 5
    points = brick.carrier("Point")
    assert len(points) == 5
    ids = sorted(str(brick.get_attr(p, "timeseriesId").value) for p in points)
    assert ids == [
        "TUC.245.77.R200", "TUC.245.77.R240", "TUC.245.77.R260",
        "TUC.245.77.R440", "TUC.245.77.R460",
    ]
    assert not brick.carrier("Zone") and not brick.carrier("Meter")


def test_delta_sigma_identity_without_identifications(example2):
    env, _, _ = example2
    ext = env.extensions["CombinedThreeWay"]
    bare = ExtensionSpec("Bare", ext.schemas, (), ())
    combined = combine_schemas(bare)
    sources = {
        "IFC": env.instances["ifc_model"],
        "BRICK": env.instances["brick_model"],
        "REC": env.instances["rec_model"],
    }
    pre = sigma_insert(combined, sources)  # empty constraint set: chase is a no-op
    for name, source in sources.items():
        recovered = delta_project(combined, pre, ext.schema_named(name))
        assert instances_same_data(recovered, source)


def test_roundtrip_rec_gains_room_areas(example2_saturated):
    env, combined, _, result = example2_saturated
    rec = delta_project(combined, result.instance, env.schemas["REC"])
    report = roundtrip_report(env.instances["rec_model"], rec)
    room = report.table("Room")
    assert room.attributes_gained == 5
    assert room.attributes_lost == 0
    assert room.rows_in == room.rows_recovered == 5


def test_roundtrip_identical_instances_all_zero(example2):
    env, _, _ = example2
    original = env.instances["rec_model"]
    report = roundtrip_report(original, original)
    for table in report.tables:
        assert table.attributes_gained == 0
        assert table.attributes_lost == 0
        assert table.new_rows == 0
        assert table.rows_recovered == table.rows_in


def test_roundtrip_brick_example1_new_rows(example1_saturated):
    env, combined, _, result = example1_saturated
    brick = delta_project(combined, result.instance, env.schemas["BRICK"])
    report = roundtrip_report(env.instances["brick_model"], brick)
    populated = {t.entity: t for t in report.tables}
    assert populated["Equipment"].new_rows == 5
    assert populated["Location"].new_rows == 5
    assert populated["Point"].new_rows == 5
    assert populated["Zone"].new_rows == 0
    assert populated["Meter"].new_rows == 0
    assert populated["SetPoint"].new_rows == 0


def test_roundtrip_ifc_example1_loses_nothing(example1_saturated):
    env, combined, _, result = example1_saturated
    ifc = delta_project(combined, result.instance, env.schemas["IFC"])
    report = roundtrip_report(env.instances["ifc_model"], ifc)
    for table in report.tables:
        assert table.attributes_lost == 0
        assert table.rows_recovered == table.rows_in


def test_homomorphism_into_recovery(example2_saturated):
    """Every source instance maps structure-preservingly into its recovery."""
    env, combined, _, result = example2_saturated
    for schema_name, inst_name in (("IFC", "ifc_model"), ("BRICK", "brick_model"), ("REC", "rec_model")):
        source = env.instances[inst_name]
        target_schema = env.schemas[schema_name]
        recovered = delta_project(combined, result.instance, target_schema)
        mapping = {}
        for entity in target_schema.entities:
            rec_by_id = {recovered.export_id(r): r for r in recovered.carrier(entity)}
            for root in source.carrier(entity):
                assert source.export_id(root) in rec_by_id, "row lost in round trip"
                mapping[root] = rec_by_id[source.export_id(root)]
        for root, image in mapping.items():
            for fk in target_schema.fks_of(root.entity):
                src_target = source.get_fk(root, fk.name)
                if src_target is None:
                    continue
                rec_target = recovered.get_fk(image, fk.name)
                assert rec_target is not None
                assert mapping[source.find(src_target)] == recovered.find(rec_target)
            for attr in target_schema.attrs_of(root.entity):
                value = source.get_attr(root, attr.name)
                if isinstance(value, Const):
                    assert recovered.get_attr(image, attr.name) == value


def test_roundtrip_render_shape(example2_saturated):
    env, combined, _, result = example2_saturated
    rec = delta_project(combined, result.instance, env.schemas["REC"])
    text = roundtrip_report(env.instances["rec_model"], rec).render()
    lines = text.strip().splitlines()
    assert lines[0].split() == ["table", "rows_in", "rows_recovered", "gained", "lost", "new_rows"]
    assert len(lines) == 4  # header + Person/Lease/Room


def test_sigma_preserves_null_sharing():
    """Two cells sharing one null class in a source stay linked after sigma."""
    from catamerge.parser import SourceDocument, parse_document

    text = """
schema A {
  entities X
  attributes p : X -> String  q : X -> String
}
extension E { include A }
"""
    env = parse_document(SourceDocument("t", text))
    assert env.ok
    schema = env.schemas["A"]
    source = new_instance(schema, "src")
    x = source.add_element("X", "x1")
    y = source.add_element("X", "x2")
    source.union_attrs(x, "p", y, "q")
    combined = combine_schemas(env.extensions["E"])
    pre = sigma_insert(combined, {"A": source})
    cx = pre.element_named("A_X", "A.x1")
    cy = pre.element_named("A_X", "A.x2")
    # anchoring one cell now determines the other
    pre.assign_attr(cx, "p", Const(BaseType.STRING, "shared"))
    assert pre.get_attr(cy, "q") == Const(BaseType.STRING, "shared")
    assert not isinstance(pre.get_attr(cy, "p"), Const)
