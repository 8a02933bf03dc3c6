"""Regenerates fixtures/demo. Geometry uses a sphere of radius 6371 km."""

import json
import math
import os
import struct
import zlib

R = 6_371_000.0
HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "demo")


def offset(origin, east_m, north_m):
    lat0, lon0 = origin
    lat = lat0 + math.degrees(north_m / R)
    lon = lon0 + math.degrees(east_m / (R * math.cos(math.radians(lat))))
    return (round(lat, 7), round(lon, 7))


def bearing(a, b):
    p1, p2 = math.radians(a[0]), math.radians(b[0])
    dl = math.radians(b[1] - a[1])
    y = math.sin(dl) * math.cos(p2)
    x = math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl)
    h = round(math.degrees(math.atan2(y, x)) % 360.0, 2)
    return 0.0 if h >= 360.0 else h


def coord(c):
    return {"lat": c[0], "lon": c[1]}


def png(rgb, w=48, h=24):
    row = b"\x00" + bytes(rgb) * w
    raw = row * h

    def chunk(kind, data):
        c = struct.pack(">I", len(data)) + kind + data
        return c + struct.pack(">I", zlib.crc32(kind + data) & 0xFFFFFFFF)

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr)
            + chunk(b"IDAT", zlib.compress(raw, 9)) + chunk(b"IEND", b""))


panos = {}   # id -> (coord, [(target, street)], capture_date)


def pano(pid, c, links, date):
    panos[pid] = (c, links, date)


# --- Route preview: Westlake Ave N, Harrison St north to Mercer St --------
WL0 = (47.6220000, -122.3387000)
wl = [f"wl-{i:02d}" for i in range(9)]
for i, pid in enumerate(wl):
    c = offset(WL0, 0.0, 37.5 * i)
    if i == 0:
        links = [("wl-01", "Westlake Ave N"), ("wl-harrison-e", "Harrison St"),
                 ("wl-south", "Westlake Ave N"), ("wl-harrison-w", "Harrison St")]
    elif i == 8:
        links = [("wl-07", "Westlake Ave N"), ("wl-09", "Westlake Ave N")]
    else:
        links = [(wl[i + 1], "Westlake Ave N"), (wl[i - 1], "Westlake Ave N")]
    pano(pid, c, links, "2022-07")
pano("wl-09", offset(WL0, 0.0, 337.5), [("wl-08", "Westlake Ave N")], "2022-07")
pano("wl-south", offset(WL0, 0.0, -37.5), [("wl-00", "Westlake Ave N")], "2022-07")
pano("wl-harrison-e", offset(WL0, 37.5, 0.0), [("wl-00", "Harrison St")], "2022-07")
pano("wl-harrison-w", offset(WL0, -37.5, 0.0), [("wl-00", "Harrison St")], "2022-07")

route_start = panos["wl-00"][0]
route_mid = offset(WL0, 0.0, 150.0)
route_end = panos["wl-08"][0]

routes = [
    {
        "origin": coord(route_start),
        "destination": coord(route_end),
        "route": {
            "polyline": [coord(route_start), coord(route_mid), coord(route_end)],
            "steps": [
                {"maneuver_kind": "Depart", "location": coord(route_start),
                 "street_name": "Westlake Ave N"},
                {"maneuver_kind": "Arrive", "location": coord(route_end),
                 "street_name": "Westlake Ave N"},
            ],
            "total_length_m": 300.0,
        },
    },
    {
        # Harbor Island has no walkable link in the network
        "origin": coord(route_start),
        "destination": coord((47.5790000, -122.3450000)),
        "unavailable": "destination is not reachable on foot",
    },
]

# --- Exploration: Greenpoint, Russell St between Nassau Ave and Driggs Ave --
GP0 = (40.7230000, -73.9450000)


def gp(e, n):
    return offset(GP0, e, n)


RUS, NOR, NAS, DRI = "Russell St", "Norman Ave", "Nassau Ave", "Driggs Ave"
pano("gp-russell-nassau", gp(0, 0), [("gp-russell-01", RUS), ("gp-nassau-e1", NAS),
                                     ("gp-russell-s1", RUS), ("gp-nassau-w1", NAS)], "2021-09")
pano("gp-russell-s1", gp(0, -40), [("gp-russell-nassau", RUS)], "2021-09")
pano("gp-nassau-e1", gp(40, 0), [("gp-russell-nassau", NAS)], "2021-09")
pano("gp-nassau-w1", gp(-40, 0), [("gp-russell-nassau", NAS)], "2021-09")
corridor = ["gp-russell-nassau"] + [f"gp-russell-{i:02d}" for i in range(1, 7)] + ["gp-russell-norman"]
for i in range(1, 7):
    pano(corridor[i], gp(0, 40 * i), [(corridor[i + 1], RUS), (corridor[i - 1], RUS)], "2021-09")
pano("gp-russell-norman", gp(0, 280), [("gp-russell-07", RUS), ("gp-norman-w1", NOR),
                                       ("gp-norman-e1", NOR), ("gp-russell-06", RUS)], "2021-09")
pano("gp-russell-07", gp(0, 320), [("gp-russell-08", RUS), ("gp-russell-norman", RUS)], "2021-09")
pano("gp-russell-08", gp(0, 360), [("gp-russell-driggs", RUS), ("gp-russell-07", RUS)], "2021-09")
pano("gp-russell-driggs", gp(0, 400), [("gp-russell-08", RUS), ("gp-driggs-e1", DRI),
                                       ("gp-driggs-w1", DRI)], "2021-09")
pano("gp-driggs-e1", gp(40, 400), [("gp-russell-driggs", DRI)], "2021-09")
pano("gp-driggs-w1", gp(-40, 400), [("gp-russell-driggs", DRI)], "2021-09")
pano("gp-norman-w1", gp(-40, 280), [("gp-russell-norman", NOR), ("gp-norman-w2", NOR)], "2021-09")
pano("gp-norman-w2", gp(-80, 280), [("gp-norman-w1", NOR)], "2021-09")
pano("gp-norman-e1", gp(40, 280), [("gp-russell-norman", NOR), ("gp-norman-e2", NOR)], "2021-09")
pano("gp-norman-e2", gp(80, 280), [("gp-norman-e1", NOR), ("gp-norman-e3", NOR)], "2021-09")
# cul-de-sac: the only way out is back west
pano("gp-norman-e3", gp(120, 280), [("gp-norman-e2", NOR)], "2021-09")

pano_json = []
for pid, (c, links, date) in panos.items():
    pano_json.append({
        "id": pid,
        "coord": coord(c),
        "capture_date": date,
        "links": [{"heading": bearing(c, panos[t][0]), "target": t, "street": s}
                  for t, s in links],
    })


def heading_of(src, dst):
    return round(bearing(panos[src][0], panos[dst][0])) % 360


places = [
    ("Harrison Street Cafe", "cafe", offset(WL0, 25, 8)),
    ("Westlake Dental", "dentist", offset(WL0, -22, 60)),
    ("Republican Street Deli", "deli", offset(WL0, 24, 118)),
    ("Cascade Playground", "playground", offset(WL0, 95, 140)),
    ("Lakeview Pharmacy", "pharmacy", offset(WL0, -26, 205)),
    ("Westlake Ave N & Mercer St", "bus stop", offset(WL0, 9, 297)),
    ("Mercer Street Garage", "parking", offset(WL0, 40, 318)),
    ("McGolrick Park", "park", gp(70, 20)),
    ("Nassau Laundromat", "laundry", gp(-30, 12)),
    ("Russell Street Market", "grocery store", gp(-15, 262)),
    ("Greenpoint Community Center", "community centre", gp(28, 300)),
    ("Key Food", "supermarket", gp(-70, 290)),
    ("Driggs Avenue Playground", "playground", gp(35, 415)),
]
place_json = [{"name": n, "category": k, "coord": coord(c)} for n, k, c in places]


def triple(long, medium, short):
    return json.dumps({"long_description": long, "medium_description": medium,
                       "short_description": short}, indent=2)


script = []


def say(key, response):
    script.append({"key": key, "response": response})


seg = [
    ("intersection:wl-00", triple(
        "A four-way intersection of Westlake Ave N and Harrison St controlled by traffic lights. "
        "Accessible pedestrian signals with push buttons are mounted on poles at the northeast and "
        "southwest corners. Yellow tactile paving is present on the curb ramps at all four corners. "
        "Harrison Street Cafe is 26 meters northeast with a green awning. The sidewalk on the east "
        "side is about 3 meters wide with smooth concrete.",
        "Signalized four-way crossing with accessible pedestrian signals and tactile paving on all "
        "corners. Harrison Street Cafe is 26 meters northeast.",
        "Signalized four-way intersection with audible signals and tactile paving.")),
    ("segment:wl-01", triple(
        "Heading north on Westlake Ave N the sidewalk stays about 3 meters wide. A row of street "
        "trees in square metal grates lines the curb side. Westlake Dental is 34 meters northwest "
        "across the street with a blue sign. A fire hydrant sits near the curb on the right.",
        "Wide sidewalk with tree grates along the curb and a fire hydrant on the right. Westlake "
        "Dental is 34 meters northwest.",
        "Wide sidewalk lined with tree grates.")),
    ("segment:wl-02", triple(
        "The sidewalk continues straight with brick pavers replacing concrete for a short stretch "
        "near a building entrance. A sandwich board sign partly blocks the inner edge of the walkway. "
        "Parked cars line the curb and the streetcar tracks run in the center of the road.",
        "Short stretch of brick pavers and a sandwich board near the building side. Streetcar "
        "tracks run down the middle of the street.",
        "Brick pavers and a sandwich board on the sidewalk.")),
    ("segment:wl-03", triple(
        "Republican Street Deli is 24 meters northeast with a red storefront and outdoor seating "
        "that narrows the sidewalk to about 2 meters. A bike rack stands near the curb in front of "
        "the deli. A driveway crosses the sidewalk just past the seating area.",
        "Outdoor seating at Republican Street Deli, 24 meters northeast, narrows the sidewalk. "
        "A driveway crosses just beyond it.",
        "Cafe seating narrows the sidewalk before a driveway.")),
    ("segment:wl-04", triple(
        "A mid-block crosswalk with a pedestrian island connects to the west side of Westlake Ave N. "
        "Cascade Playground is 95 meters east behind the buildings. The sidewalk returns to smooth "
        "concrete about 3 meters wide with a slight uphill slope.",
        "Mid-block crosswalk with a pedestrian island on the left. Cascade Playground is 95 meters "
        "east.",
        "Mid-block crosswalk with a refuge island.")),
    ("segment:wl-05", triple(
        "A covered walkway from a construction site runs along the building side with plywood walls "
        "and temporary lighting. The walkway keeps about 1.5 meters of clear width. Orange barrels "
        "separate it from the bike lane.",
        "Covered construction walkway narrows the path to about 1.5 meters.",
        "Covered construction walkway along the buildings.")),
    ("segment:wl-06", triple(
        "Lakeview Pharmacy is 26 meters northwest across the street with a lit green cross sign. "
        "On this side the sidewalk widens again and planters with low hedges line the building "
        "edge. A newspaper box stands near the curb.",
        "Sidewalk widens with planters along the buildings. Lakeview Pharmacy is 26 meters "
        "northwest.",
        "Wider sidewalk with planters on the right.")),
    ("segment:wl-07", triple(
        "A bus shelter comes into view ahead on the right with a glass roof and a bench. Tactile "
        "paving marks the boarding area at the curb. A trash can and a light pole sit just before "
        "the shelter.",
        "Bus shelter ahead on the right with tactile paving at the boarding area.",
        "Bus shelter ahead with tactile boarding area.")),
    ("segment:wl-08", triple(
        "The Westlake Ave N & Mercer St bus stop is 9 meters east beside a glass shelter with a red "
        "RapidRide sign. Mercer Street Garage is 45 meters northeast. The sidewalk is concrete and "
        "about 4 meters wide around the shelter.",
        "RapidRide stop with a glass shelter 9 meters east. Mercer Street Garage is 45 meters "
        "northeast.",
        "RapidRide bus stop with shelter on the right.")),
]
for k, v in seg:
    say(k, v)

say("destination:wl-06,wl-07,wl-08", json.dumps({
    "path_summary": "A straight wide sidewalk along Westlake Ave N with planters on the right and a "
                    "newspaper box near the curb before the stop.",
    "place_summary": "A glass bus shelter with a metal frame and a bench inside, set close to the "
                     "curb. A tall red pole with the RapidRide sign stands at the front of the shelter.",
    "mobility_cues": "A trash can and a light pole are just before the shelter. Tactile paving runs "
                     "along the curb at the boarding area.",
    "sidewalk": "Smooth concrete about 4 meters wide that narrows slightly where the shelter sits.",
    "text": "The sign reads RapidRide C Line, Westlake Ave N & Mercer St.",
}, indent=2))

say("keywords", json.dumps({"keywords": ["Parks", "Grocery stores", "Community centers",
                                         "Residential area"]}))
say("place_type", json.dumps({"place_type": "park"}))

blocks = {
    "gp-russell-nassau": ("McGolrick Park is 72 meters east with tall trees and a black iron fence. "
                          "Nassau Laundromat is 32 meters northwest. The sidewalk on Russell St is "
                          "concrete about 2.5 meters wide with curb ramps at the corner.",
                          "McGolrick Park is 72 meters east. Curb ramps at the corner.",
                          "Park to the east at the corner of Russell and Nassau."),
    "gp-russell-01": ("Three-story brick row houses with stoops line the left side. Street trees in "
                      "open dirt pits break up the sidewalk edge. The park fence continues on the right.",
                      "Row houses with stoops on the left and the park fence on the right.",
                      "Quiet residential block beside the park."),
    "gp-russell-02": ("The park fence ends and a row of vinyl-sided houses begins on the right. "
                      "Garbage bins sit near the curb. The sidewalk has raised slabs near a tree root.",
                      "Houses on both sides and a raised sidewalk slab near a tree.",
                      "Residential street with a raised slab."),
    "gp-russell-03": ("A small playground entrance is visible through a gap between houses. A "
                      "parked delivery van occupies the loading zone on the right.",
                      "Playground entrance between houses and a loading zone on the right.",
                      "Residential block with a playground entrance."),
    "gp-russell-04": ("Row houses continue with low metal gates. A fire hydrant and a no parking "
                      "sign stand near the curb. The sidewalk is even concrete.",
                      "Row houses with gates and even concrete sidewalk.",
                      "Even sidewalk past row houses."),
    "gp-russell-05": ("A corner store sign for Russell Street Market is visible ahead on the left. "
                      "Scaffolding covers the sidewalk in front of one building.",
                      "Scaffolding ahead and a market sign visible on the left.",
                      "Scaffolding and a market sign ahead."),
    "gp-russell-06": ("Russell Street Market is 19 meters northwest with produce stands on the "
                      "sidewalk. Greenpoint Community Center is 36 meters northeast. The "
                      "intersection with Norman Ave is just ahead.",
                      "Market with produce stands on the left before Norman Ave.",
                      "Grocery market on the left before Norman Ave."),
    "gp-russell-07": ("Greenpoint Community Center has a brick facade and a ramp at its entrance on "
                      "the right. A bulletin board lists after-school programs.",
                      "Community center with an entrance ramp on the right.",
                      "Community center entrance ramp on the right."),
    "gp-russell-08": ("The block becomes quieter with two-family houses and small front yards. "
                      "Driggs Avenue Playground is ahead on the right.",
                      "Two-family houses with yards and a playground ahead.",
                      "Quiet houses with a playground ahead."),
    "gp-norman-w1": ("Key Food is 33 meters west with a large yellow sign and shopping carts near "
                     "the door. The sidewalk is crowded with carts near the entrance.",
                     "Key Food supermarket 33 meters west with carts near the door.",
                     "Supermarket ahead on Norman Ave."),
    "gp-norman-w2": ("The sidewalk ends at a fenced lot beyond Key Food. Traffic cones block part "
                     "of the path.",
                     "Fenced lot and traffic cones ahead.",
                     "Fenced lot where the sidewalk ends."),
    "gp-norman-e1": ("Norman Ave east of Russell St has warehouses with loading docks. Curb cuts "
                     "for driveways are frequent.",
                     "Warehouses with frequent driveway curb cuts.",
                     "Warehouse block with many driveways."),
    "gp-norman-e2": ("The warehouses continue and the sidewalk narrows to about 1.5 meters next to "
                     "a parked truck.",
                     "Sidewalk narrows beside warehouses.",
                     "Narrow sidewalk by warehouses."),
    "gp-norman-e3": ("The street ends in a cul-de-sac with a chain link fence. There is no "
                     "through path.",
                     "Dead end at a chain link fence.",
                     "Cul-de-sac with no way through."),
}
for pid, (l, m, s) in blocks.items():
    say(f"exploration_block:{pid}", triple(l, m, s))

J = "gp-russell-norman"
directions = {
    ("gp-russell-07", "North", "Heading North on Russell Street: passes Greenpoint Community Center "
     "and continues toward Driggs Avenue Playground. Mostly residential with a park nearby."),
    ("gp-norman-w1", "West", "Heading West on Norman Avenue: leads to Key Food supermarket. Busy "
     "sidewalk with shopping carts and no parks in view."),
    ("gp-norman-e1", "East", "Heading East on Norman Avenue: warehouses and loading docks. No "
     "shops or parks in sight."),
    ("gp-russell-06", "South", "Heading South on Russell Street: back toward McGolrick Park past "
     "the row houses you already walked."),
}
for target, _, text in sorted(directions):
    say(f"direction:{J}_h{heading_of(J, target):03d}_f090", json.dumps({"description": text}))
say(f"selector:{J}", json.dumps({
    "idx": "1",
    "reason": "Head North on Russell Street because the community center and a playground are "
              "ahead, matching the interest in parks and community centers."}))

D = "gp-russell-driggs"
say(f"direction:{D}_h{heading_of(D, 'gp-russell-08'):03d}_f090", json.dumps({
    "description": "Heading South on Russell Street: back past the community center toward Norman Avenue."}))
say(f"direction:{D}_h{heading_of(D, 'gp-driggs-e1'):03d}_f090", json.dumps({
    "description": "Heading East on Driggs Avenue: Driggs Avenue Playground is on the right."}))
# the selector at Driggs answers outside the offered range
say(f"selector:{D}", json.dumps({"idx": "7", "reason": "Head somewhere else."}))

E3 = "gp-norman-e3"
say(f"direction:{E3}_h{heading_of(E3, 'gp-norman-e2'):03d}_f090", json.dumps({
    "description": "Heading West on Norman Avenue: the only way out of the cul-de-sac, back "
                   "toward Russell Street."}))

os.makedirs(os.path.join(OUT, "tiles"), exist_ok=True)


def dump(name, obj):
    with open(os.path.join(OUT, name), "w") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


dump("panoramas.json", pano_json)
dump("routes.json", routes)
dump("places.json", place_json)
dump("mllm_script.json", {"responses": script, "latency_ms": 0})
for i, pid in enumerate(sorted(panos)):
    rgb = ((37 * i) % 256, (91 * i + 40) % 256, (53 * i + 90) % 256)
    with open(os.path.join(OUT, "tiles", f"{pid}.png"), "wb") as f:
        f.write(png(rgb))
