"""Fixture generators: scale the commissioning scenario to any room count.

The point of the scaled document is that the extension block is a fixed
constant: integration rules are written once and apply to 5 rooms or 500.
"""

from __future__ import annotations

IFC_SCHEMA_TEXT = """\
schema IFC {
  entities IfcSpace IfcSensor IfcDistributionElement PropertySet
  foreign_keys
    hasPropertySet : IfcSensor -> PropertySet
    sensorAttachedTo : IfcSensor -> IfcDistributionElement
    elementInSpace : IfcDistributionElement -> IfcSpace
  attributes
    spaceName : IfcSpace -> String
    spaceArea : IfcSpace -> Double
    sensorName : IfcSensor -> String
    sensorType : IfcSensor -> String
    elementName : IfcDistributionElement -> String
    elementType : IfcDistributionElement -> String
    deviceId : PropertySet -> String
    psetName : PropertySet -> String
    serialNumber : PropertySet -> String
}
"""

BRICK_SCHEMA_TEXT = """\
schema BRICK {
  entities Equipment Point Location Zone Meter SetPoint
  foreign_keys
    hasPoint : Equipment -> Point
    hasLocation : Equipment -> Location
    feeds : Equipment -> Zone
    isLocationOf : Location -> Equipment
    isPartOf : Location -> Zone
    hasLocation : Meter -> Location
    hasPoint : Zone -> SetPoint
  attributes
    equipmentName : Equipment -> String
    equipmentIdentifier : Equipment -> String
    equipmentType : Equipment -> String
    pointName : Point -> String
    pointType : Point -> String
    pointUnits : Point -> String
    timeseriesId : Point -> String
    locationName : Location -> String
    zoneName : Zone -> String
    energyConsumption : Meter -> Double
    setPointName : SetPoint -> String
    setPointValue : SetPoint -> Double
    setPointUnits : SetPoint -> String
}
"""

EXAMPLE1_EXTENSION_TEXT = """\
extension Combined {
  include IFC BRICK
  identify BRICK.Equipment = IFC.IfcDistributionElement
  identify BRICK.Location = IFC.IfcSpace
  constraints
    forall e : Equipment -> e.hasLocation = e.elementInSpace
    forall s : IfcSensor p : Point where p = s.sensorAttachedTo.hasPoint -> p.timeseriesId = s.hasPropertySet.deviceId
}
"""

EXAMPLE1_QUERY_TEXT = """\
query q : Combined {
  from e : Equipment
  attributes
    IFC_spaceName -> e.hasLocation.spaceName
    IFC_spaceArea -> e.hasLocation.spaceArea
    BRICK_timeseriesId -> e.hasPoint.timeseriesId
}
"""


def room_tag(i: int) -> str:
    return f"R{i:03d}"


def room_area(i: int) -> float:
    return round(15.0 + (i % 40) * 0.25, 2)


def scaled_ifc_instance_text(rooms: int) -> str:
    """An IFC design model with one space/AC unit/sensor/tag set per room."""
    lines = ["instance ifc_model : IFC {"]
    lines.append("  entity IfcSpace {")
    for i in range(1, rooms + 1):
        lines.append(
            f'    row sp_{i:03d} {{ spaceName = "Room {room_tag(i)}" spaceArea = {room_area(i)} }}'
        )
    lines.append("  }")
    lines.append("  entity IfcDistributionElement {")
    for i in range(1, rooms + 1):
        lines.append(
            f'    row el_{i:03d} {{ elementName = "Split AC {room_tag(i)}" '
            f'elementType = "AirConditioningUnit" elementInSpace = sp_{i:03d} }}'
        )
    lines.append("  }")
    lines.append("  entity IfcSensor {")
    for i in range(1, rooms + 1):
        lines.append(
            f'    row sn_{i:03d} {{ sensorName = "Temperature Sensor {room_tag(i)}" '
            f'sensorType = "TemperatureSensor" sensorAttachedTo = el_{i:03d} '
            f"hasPropertySet = ps_{i:03d} }}"
        )
    lines.append("  }")
    lines.append("  entity PropertySet {")
    for i in range(1, rooms + 1):
        lines.append(
            f'    row ps_{i:03d} {{ deviceId = "TUC.245.77.{room_tag(i)}" '
            f'psetName = "BMS Binding {room_tag(i)}" serialNumber = "SN-{82000 + i}" }}'
        )
    lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


def scaled_example1_document(rooms: int) -> str:
    """The full commissioning document at the given scale.

    Only the instance block varies with the room count; schemas, extension,
    and query are byte-identical at every scale.
    """
    return "\n".join(
        [
            IFC_SCHEMA_TEXT,
            BRICK_SCHEMA_TEXT,
            scaled_ifc_instance_text(rooms),
            "instance brick_model : BRICK { }\n",
            EXAMPLE1_EXTENSION_TEXT,
            EXAMPLE1_QUERY_TEXT,
        ]
    )
