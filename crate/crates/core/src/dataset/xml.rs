//! Streaming reader and writer for the camera and track XML documents.
//!
//! Both documents are processed one element at a time; memory use is bounded
//! by the largest single element, not the document. Numbers are written in
//! shortest round-trip form, so a write followed by a read reproduces every
//! `f64` exactly.
//!
//! ```xml
//! <cameras>
//!   <camera id="C1">
//!     <image src="img/C1.png" width="1280" height="960"/>
//!     <intrinsics fx="900.0" fy="900.0" cx="640.0" cy="480.0"/>
//!     <pose kind="initial">
//!       <rotation qw="1.0" qx="0.0" qy="0.0" qz="0.0"/>
//!       <center x="0.0" y="0.0" z="10.0"/>
//!     </pose>
//!   </camera>
//! </cameras>
//!
//! <tracks>
//!   <track id="T1">
//!     <point kind="initial" x="1.0" y="2.0" z="3.0"/>
//!     <obs camera="C1" u="100.5" v="200.25"/>
//!     <obs camera="C2" u="110.0" v="190.0"/>
//!   </track>
//! </tracks>
//! ```
//!
//! `rotation` is the world-to-camera rotation and `center` the camera center
//! in world coordinates (not the translation `-R * C`).

use std::collections::HashSet;
use std::io::{self, BufRead, Read, Write};

use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};
use quick_xml::escape::escape;
use quick_xml::events::Event;
use quick_xml::Reader;

use super::{Dataset, DatasetError, Result, Warning};
use crate::geometry::{Camera, Intrinsics, Observation, Pose, Track};

/// Maximum number of warnings retained per document; later ones are only counted.
const MAX_STORED_WARNINGS: usize = 1000;

/// Quaternions further than this from unit norm are rejected.
const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;

/// Counts newlines in consumed bytes so errors can report a line number.
struct LineCounter<R> {
    inner: R,
    line: usize,
}

impl<R: BufRead> Read for LineCounter<R> {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(out)?;
        self.line += bytecount(&out[..n]);
        Ok(n)
    }
}

impl<R: BufRead> BufRead for LineCounter<R> {
    fn fill_buf(&mut self) -> io::Result<&[u8]> {
        self.inner.fill_buf()
    }

    fn consume(&mut self, amt: usize) {
        // the buffer is non-empty whenever amt > 0, so this never performs I/O
        if let Ok(buf) = self.inner.fill_buf() {
            self.line += bytecount(&buf[..amt.min(buf.len())]);
        }
        self.inner.consume(amt);
    }
}

fn bytecount(bytes: &[u8]) -> usize {
    bytes.iter().filter(|&&b| b == b'\n').count()
}

enum Node {
    Open {
        name: String,
        attrs: Vec<(String, String)>,
    },
    Close {
        name: String,
    },
    Eof,
}

struct XmlCursor<R: BufRead> {
    reader: Reader<LineCounter<R>>,
    buf: Vec<u8>,
    warnings: Vec<Warning>,
    warning_count: usize,
}

impl<R: BufRead> XmlCursor<R> {
    fn new(inner: R) -> Self {
        let mut reader = Reader::from_reader(LineCounter { inner, line: 1 });
        let config = reader.config_mut();
        config.expand_empty_elements = true;
        config.check_end_names = true;
        Self {
            reader,
            buf: Vec::with_capacity(512),
            warnings: Vec::new(),
            warning_count: 0,
        }
    }

    fn line(&self) -> usize {
        self.reader.get_ref().line
    }

    fn schema<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(DatasetError::Schema {
            line: self.line(),
            message: message.into(),
        })
    }

    fn warn(&mut self, warning: Warning) {
        self.warning_count += 1;
        if self.warnings.len() < MAX_STORED_WARNINGS {
            self.warnings.push(warning);
        }
    }

    fn next(&mut self) -> Result<Node> {
        loop {
            self.buf.clear();
            let event = match self.reader.read_event_into(&mut self.buf) {
                Ok(e) => e,
                Err(e) => {
                    let line = self.reader.get_ref().line;
                    return Err(DatasetError::Schema {
                        line,
                        message: format!("malformed XML: {e}"),
                    });
                }
            };
            let line = self.reader.get_ref().line;
            let node = match event {
                Event::Start(e) => {
                    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                    let mut attrs = Vec::new();
                    for a in e.attributes() {
                        let a = a.map_err(|err| DatasetError::Schema {
                            line,
                            message: format!("bad attribute on <{name}>: {err}"),
                        })?;
                        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
                        let value = a
                            .unescape_value()
                            .map_err(|err| DatasetError::Schema {
                                line,
                                message: format!("bad value for `{key}` on <{name}>: {err}"),
                            })?
                            .into_owned();
                        attrs.push((key, value));
                    }
                    Node::Open { name, attrs }
                }
                Event::End(e) => Node::Close {
                    name: String::from_utf8_lossy(e.name().as_ref()).into_owned(),
                },
                Event::Eof => Node::Eof,
                Event::Text(t) => {
                    if t.iter().all(|b| b.is_ascii_whitespace()) {
                        continue;
                    }
                    return Err(DatasetError::Schema {
                        line,
                        message: "unexpected text content".into(),
                    });
                }
                Event::CData(_) | Event::GeneralRef(_) => {
                    return Err(DatasetError::Schema {
                        line,
                        message: "unexpected character data".into(),
                    });
                }
                Event::Empty(_) => unreachable!("empty elements are expanded"),
                Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => continue,
            };
            return Ok(node);
        }
    }

    /// Picks the `known` attributes out of `attrs`, warning on the rest.
    fn take_attrs<const N: usize>(
        &mut self,
        element: &str,
        attrs: Vec<(String, String)>,
        known: [&str; N],
    ) -> [Option<String>; N] {
        let mut out: [Option<String>; N] = std::array::from_fn(|_| None);
        for (key, value) in attrs {
            match known.iter().position(|k| *k == key) {
                Some(i) => out[i] = Some(value),
                None => {
                    let line = self.line();
                    self.warn(Warning::UnknownAttribute {
                        line,
                        element: element.to_string(),
                        attribute: key,
                    });
                }
            }
        }
        out
    }

    fn required(&self, element: &str, name: &str, value: Option<String>) -> Result<String> {
        match value {
            Some(v) => Ok(v),
            None => self.schema(format!(
                "<{element}> is missing required attribute `{name}`"
            )),
        }
    }

    fn float(&self, element: &str, name: &str, value: Option<String>) -> Result<f64> {
        let raw = self.required(element, name, value)?;
        let v: f64 = raw.trim().parse().map_err(|_| DatasetError::Value {
            line: self.line(),
            message: format!("`{name}` on <{element}> is not a number: {raw:?}"),
        })?;
        if !v.is_finite() {
            return Err(DatasetError::Value {
                line: self.line(),
                message: format!("`{name}` on <{element}> is not finite: {raw:?}"),
            });
        }
        Ok(v)
    }

    fn count(&self, element: &str, name: &str, value: Option<String>) -> Result<u32> {
        let raw = self.required(element, name, value)?;
        raw.trim().parse().map_err(|_| DatasetError::Value {
            line: self.line(),
            message: format!("`{name}` on <{element}> is not a non-negative integer: {raw:?}"),
        })
    }

    /// Consumes the closing tag of a leaf element.
    fn close_leaf(&mut self, element: &str) -> Result<()> {
        match self.next()? {
            Node::Close { .. } => Ok(()),
            Node::Open { name, .. } => {
                self.schema(format!("unknown element <{name}> inside <{element}>"))
            }
            Node::Eof => self.schema(format!("document ends inside <{element}>")),
        }
    }

    /// Reads up to the root element, which must be `root`.
    fn open_root(&mut self, root: &str) -> Result<()> {
        match self.next()? {
            Node::Open { name, attrs } if name == root => {
                self.take_attrs(root, attrs, []);
                Ok(())
            }
            Node::Open { name, .. } => {
                self.schema(format!("expected <{root}> root, found <{name}>"))
            }
            Node::Close { name } => self.schema(format!("unexpected </{name}>")),
            Node::Eof => self.schema(format!("empty document, expected <{root}>")),
        }
    }

    fn expect_eof(&mut self) -> Result<()> {
        match self.next()? {
            Node::Eof => Ok(()),
            _ => self.schema("content after the root element"),
        }
    }

    fn read_kind(&mut self, element: &str, value: Option<String>) -> Result<bool> {
        let kind = self.required(element, "kind", value)?;
        match kind.as_str() {
            "initial" => Ok(false),
            "final" => Ok(true),
            other => Err(DatasetError::Value {
                line: self.line(),
                message: format!("<{element}> kind must be initial or final, got {other:?}"),
            }),
        }
    }
}

/// Parses a camera document held in memory.
pub fn parse_cameras(xml: &[u8]) -> Result<Vec<Camera>> {
    read_cameras(xml).map(|(cameras, _)| cameras)
}

/// Streams a camera document, returning the cameras in document order plus
/// any warnings (unknown attributes).
pub fn read_cameras<R: BufRead>(reader: R) -> Result<(Vec<Camera>, Vec<Warning>)> {
    let mut cur = XmlCursor::new(reader);
    cur.open_root("cameras")?;
    let mut cameras = Vec::new();
    let mut ids = HashSet::new();
    loop {
        match cur.next()? {
            Node::Open { name, attrs } if name == "camera" => {
                let [id] = cur.take_attrs("camera", attrs, ["id"]);
                let id = cur.required("camera", "id", id)?;
                let line = cur.line();
                let camera = read_camera_body(&mut cur, id)?;
                if !ids.insert(camera.id.clone()) {
                    return Err(DatasetError::DuplicateId {
                        what: "camera",
                        id: camera.id,
                        line,
                    });
                }
                cameras.push(camera);
            }
            Node::Open { name, .. } => {
                return cur.schema(format!("unknown element <{name}> inside <cameras>"))
            }
            Node::Close { .. } => break,
            Node::Eof => return cur.schema("document ends inside <cameras>"),
        }
    }
    cur.expect_eof()?;
    Ok((cameras, cur.warnings))
}

fn read_camera_body<R: BufRead>(cur: &mut XmlCursor<R>, id: String) -> Result<Camera> {
    let mut image: Option<(String, u32, u32)> = None;
    let mut focal: Option<[f64; 4]> = None;
    let mut initial: Option<Pose> = None;
    let mut fin: Option<Pose> = None;
    loop {
        match cur.next()? {
            Node::Open { name, attrs } => match name.as_str() {
                "image" => {
                    if image.is_some() {
                        return cur.schema(format!("camera `{id}` has more than one <image>"));
                    }
                    let [src, w, h] = cur.take_attrs("image", attrs, ["src", "width", "height"]);
                    let src = cur.required("image", "src", src)?;
                    let w = cur.count("image", "width", w)?;
                    let h = cur.count("image", "height", h)?;
                    if w == 0 || h == 0 {
                        return Err(DatasetError::Value {
                            line: cur.line(),
                            message: format!("camera `{id}` image size must be at least 1x1"),
                        });
                    }
                    image = Some((src, w, h));
                    cur.close_leaf("image")?;
                }
                "intrinsics" => {
                    if focal.is_some() {
                        return cur.schema(format!("camera `{id}` has more than one <intrinsics>"));
                    }
                    let [fx, fy, cx, cy] =
                        cur.take_attrs("intrinsics", attrs, ["fx", "fy", "cx", "cy"]);
                    let v = [
                        cur.float("intrinsics", "fx", fx)?,
                        cur.float("intrinsics", "fy", fy)?,
                        cur.float("intrinsics", "cx", cx)?,
                        cur.float("intrinsics", "cy", cy)?,
                    ];
                    if v[0] <= 0.0 || v[1] <= 0.0 {
                        return Err(DatasetError::Value {
                            line: cur.line(),
                            message: format!("camera `{id}` focal lengths must be positive"),
                        });
                    }
                    focal = Some(v);
                    cur.close_leaf("intrinsics")?;
                }
                "pose" => {
                    let [kind] = cur.take_attrs("pose", attrs, ["kind"]);
                    let is_final = cur.read_kind("pose", kind)?;
                    let slot = if is_final { &mut fin } else { &mut initial };
                    if slot.is_some() {
                        let kind = if is_final { "final" } else { "initial" };
                        return cur
                            .schema(format!("camera `{id}` has more than one {kind} <pose>"));
                    }
                    let pose = read_pose_body(cur)?;
                    let slot = if is_final { &mut fin } else { &mut initial };
                    *slot = Some(pose);
                }
                other => {
                    return cur.schema(format!("unknown element <{other}> inside <camera>"));
                }
            },
            Node::Close { .. } => break,
            Node::Eof => return cur.schema("document ends inside <camera>"),
        }
    }
    let Some((image_ref, width, height)) = image else {
        return cur.schema(format!("camera `{id}` is missing <image>"));
    };
    let Some([fx, fy, cx, cy]) = focal else {
        return cur.schema(format!("camera `{id}` is missing <intrinsics>"));
    };
    let Some(pose_initial) = initial else {
        return cur.schema(format!("camera `{id}` is missing <pose kind=\"initial\">"));
    };
    Ok(Camera {
        id,
        image_ref,
        intrinsics: Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        },
        pose_initial,
        pose_final: fin,
    })
}

fn read_pose_body<R: BufRead>(cur: &mut XmlCursor<R>) -> Result<Pose> {
    let mut rotation = None;
    let mut center = None;
    loop {
        match cur.next()? {
            Node::Open { name, attrs } => match name.as_str() {
                "rotation" if rotation.is_none() => {
                    let [w, x, y, z] = cur.take_attrs("rotation", attrs, ["qw", "qx", "qy", "qz"]);
                    let q = Quaternion::new(
                        cur.float("rotation", "qw", w)?,
                        cur.float("rotation", "qx", x)?,
                        cur.float("rotation", "qy", y)?,
                        cur.float("rotation", "qz", z)?,
                    );
                    rotation = Some(unit_quaternion(q).map_err(|message| DatasetError::Value {
                        line: cur.line(),
                        message,
                    })?);
                    cur.close_leaf("rotation")?;
                }
                "center" if center.is_none() => {
                    let [x, y, z] = cur.take_attrs("center", attrs, ["x", "y", "z"]);
                    center = Some(Vector3::new(
                        cur.float("center", "x", x)?,
                        cur.float("center", "y", y)?,
                        cur.float("center", "z", z)?,
                    ));
                    cur.close_leaf("center")?;
                }
                "rotation" | "center" => {
                    return cur.schema(format!("<pose> has more than one <{name}>"));
                }
                other => return cur.schema(format!("unknown element <{other}> inside <pose>")),
            },
            Node::Close { .. } => break,
            Node::Eof => return cur.schema("document ends inside <pose>"),
        }
    }
    match (rotation, center) {
        (Some(rotation), Some(center)) => Ok(Pose { rotation, center }),
        (None, _) => cur.schema("<pose> is missing <rotation>"),
        (_, None) => cur.schema("<pose> is missing <center>"),
    }
}

/// Accepts quaternions within tolerance of unit norm. Ones already unit to
/// rounding are kept bit-for-bit so that re-reading written files is exact.
fn unit_quaternion(q: Quaternion<f64>) -> std::result::Result<UnitQuaternion<f64>, String> {
    let n2 = q.norm_squared();
    let n = n2.sqrt();
    if (n - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
        return Err(format!(
            "quaternion norm {n} is not within {QUATERNION_NORM_TOLERANCE} of 1"
        ));
    }
    if (n2 - 1.0).abs() <= 1e-14 {
        Ok(UnitQuaternion::new_unchecked(q))
    } else {
        Ok(UnitQuaternion::new_normalize(q))
    }
}

/// Parses a track document held in memory, resolving observations against `cameras`.
pub fn parse_tracks(xml: &[u8], cameras: &[Camera]) -> Result<Vec<Track>> {
    TrackReader::new(xml, Some(cameras)).collect()
}

/// Streaming iterator over the tracks of a track document.
///
/// Only the current `<track>` is held in memory, plus the set of ids seen so
/// far (for duplicate detection).
pub struct TrackReader<R: BufRead> {
    cur: XmlCursor<R>,
    cameras: Option<HashSet<String>>,
    seen: HashSet<String>,
    started: bool,
    done: bool,
}

impl<R: BufRead> TrackReader<R> {
    /// With `cameras` set, observations naming other cameras are rejected.
    pub fn new(reader: R, cameras: Option<&[Camera]>) -> Self {
        Self {
            cur: XmlCursor::new(reader),
            cameras: cameras.map(|cs| cs.iter().map(|c| c.id.clone()).collect()),
            seen: HashSet::new(),
            started: false,
            done: false,
        }
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.cur.warnings
    }

    /// Total warnings, including those beyond the retained maximum.
    pub fn warning_count(&self) -> usize {
        self.cur.warning_count
    }

    fn next_track(&mut self) -> Result<Option<Track>> {
        if !self.started {
            self.started = true;
            self.cur.open_root("tracks")?;
        }
        let (id, line) = match self.cur.next()? {
            Node::Open { name, attrs } if name == "track" => {
                let [id] = self.cur.take_attrs("track", attrs, ["id"]);
                (self.cur.required("track", "id", id)?, self.cur.line())
            }
            Node::Open { name, .. } => {
                return self
                    .cur
                    .schema(format!("unknown element <{name}> inside <tracks>"))
            }
            Node::Close { .. } => {
                self.cur.expect_eof()?;
                return Ok(None);
            }
            Node::Eof => return self.cur.schema("document ends inside <tracks>"),
        };
        let track = self.read_track_body(id)?;
        if track.observations.len() < 2 {
            return Err(DatasetError::TooFewObservations {
                track_id: track.id,
                count: track.observations.len(),
                line,
            });
        }
        if !self.seen.insert(track.id.clone()) {
            return Err(DatasetError::DuplicateId {
                what: "track",
                id: track.id,
                line,
            });
        }
        Ok(Some(track))
    }

    fn read_track_body(&mut self, id: String) -> Result<Track> {
        let cur = &mut self.cur;
        let mut initial = None;
        let mut fin = None;
        let mut observations: Vec<Observation> = Vec::new();
        loop {
            match cur.next()? {
                Node::Open { name, attrs } => match name.as_str() {
                    "point" => {
                        let [kind, x, y, z] =
                            cur.take_attrs("point", attrs, ["kind", "x", "y", "z"]);
                        let is_final = cur.read_kind("point", kind)?;
                        let p = Vector3::new(
                            cur.float("point", "x", x)?,
                            cur.float("point", "y", y)?,
                            cur.float("point", "z", z)?,
                        );
                        let slot = if is_final { &mut fin } else { &mut initial };
                        if slot.replace(p).is_some() {
                            return cur.schema(format!("track `{id}` repeats a <point> kind"));
                        }
                        cur.close_leaf("point")?;
                    }
                    "obs" => {
                        let [camera, u, v] = cur.take_attrs("obs", attrs, ["camera", "u", "v"]);
                        let camera_id = cur.required("obs", "camera", camera)?;
                        let pixel =
                            Vector2::new(cur.float("obs", "u", u)?, cur.float("obs", "v", v)?);
                        if let Some(known) = &self.cameras {
                            if !known.contains(&camera_id) {
                                return Err(DatasetError::UnknownCameraRef {
                                    track_id: id,
                                    camera_id,
                                    line: cur.line(),
                                });
                            }
                        }
                        if observations.iter().any(|o| o.camera_id == camera_id) {
                            return Err(DatasetError::DuplicateId {
                                what: "observation camera",
                                id: camera_id,
                                line: cur.line(),
                            });
                        }
                        observations.push(Observation { camera_id, pixel });
                        cur.close_leaf("obs")?;
                    }
                    other => {
                        return cur.schema(format!("unknown element <{other}> inside <track>"))
                    }
                },
                Node::Close { .. } => break,
                Node::Eof => return cur.schema("document ends inside <track>"),
            }
        }
        let Some(point_initial) = initial else {
            return cur.schema(format!("track `{id}` is missing <point kind=\"initial\">"));
        };
        Ok(Track {
            id,
            observations,
            point_initial,
            point_final: fin,
        })
    }
}

impl<R: BufRead> Iterator for TrackReader<R> {
    type Item = Result<Track>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_track() {
            Ok(Some(t)) => Some(Ok(t)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

const XML_HEADER: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";

fn write_pose<W: Write>(out: &mut W, kind: &str, pose: &Pose) -> io::Result<()> {
    let q = pose.rotation.quaternion();
    let c = &pose.center;
    writeln!(out, "    <pose kind=\"{kind}\">")?;
    writeln!(
        out,
        "      <rotation qw=\"{:?}\" qx=\"{:?}\" qy=\"{:?}\" qz=\"{:?}\"/>",
        q.w, q.i, q.j, q.k
    )?;
    writeln!(
        out,
        "      <center x=\"{:?}\" y=\"{:?}\" z=\"{:?}\"/>",
        c.x, c.y, c.z
    )?;
    writeln!(out, "    </pose>")
}

pub fn write_cameras<W: Write>(mut out: W, cameras: &[Camera]) -> io::Result<()> {
    out.write_all(XML_HEADER.as_bytes())?;
    writeln!(out, "<cameras>")?;
    for cam in cameras {
        let k = &cam.intrinsics;
        writeln!(out, "  <camera id=\"{}\">", escape(cam.id.as_str()))?;
        writeln!(
            out,
            "    <image src=\"{}\" width=\"{}\" height=\"{}\"/>",
            escape(cam.image_ref.as_str()),
            k.width,
            k.height
        )?;
        writeln!(
            out,
            "    <intrinsics fx=\"{:?}\" fy=\"{:?}\" cx=\"{:?}\" cy=\"{:?}\"/>",
            k.fx, k.fy, k.cx, k.cy
        )?;
        write_pose(&mut out, "initial", &cam.pose_initial)?;
        if let Some(p) = &cam.pose_final {
            write_pose(&mut out, "final", p)?;
        }
        writeln!(out, "  </camera>")?;
    }
    writeln!(out, "</cameras>")?;
    out.flush()
}

/// Incremental track document writer.
pub struct TrackWriter<W: Write> {
    out: W,
}

impl<W: Write> TrackWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        out.write_all(XML_HEADER.as_bytes())?;
        writeln!(out, "<tracks>")?;
        Ok(Self { out })
    }

    pub fn write_track(&mut self, track: &Track) -> io::Result<()> {
        let out = &mut self.out;
        writeln!(out, "  <track id=\"{}\">", escape(track.id.as_str()))?;
        let p = &track.point_initial;
        writeln!(
            out,
            "    <point kind=\"initial\" x=\"{:?}\" y=\"{:?}\" z=\"{:?}\"/>",
            p.x, p.y, p.z
        )?;
        if let Some(p) = &track.point_final {
            writeln!(
                out,
                "    <point kind=\"final\" x=\"{:?}\" y=\"{:?}\" z=\"{:?}\"/>",
                p.x, p.y, p.z
            )?;
        }
        for o in &track.observations {
            writeln!(
                out,
                "    <obs camera=\"{}\" u=\"{:?}\" v=\"{:?}\"/>",
                escape(o.camera_id.as_str()),
                o.pixel.x,
                o.pixel.y
            )?;
        }
        writeln!(out, "  </track>")
    }

    pub fn finish(mut self) -> io::Result<W> {
        writeln!(self.out, "</tracks>")?;
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_tracks<W: Write>(out: W, tracks: &[Track]) -> io::Result<()> {
    let mut w = TrackWriter::new(out)?;
    for t in tracks {
        w.write_track(t)?;
    }
    w.finish().map(drop)
}

/// Renders both documents of a dataset.
pub fn serialize(dataset: &Dataset) -> (Vec<u8>, Vec<u8>) {
    let mut cameras = Vec::new();
    let mut tracks = Vec::new();
    write_cameras(&mut cameras, &dataset.cameras).expect("writing to memory");
    write_tracks(&mut tracks, &dataset.tracks).expect("writing to memory");
    (cameras, tracks)
}
