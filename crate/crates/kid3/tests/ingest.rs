use kid3::error::{Error, RowErrorKind};
use kid3::ingest::{build_manifest, parse_annotations, parse_time, read_manifest, read_videos, write_manifest, write_videos, VideoRow};
use kid3_core::annotation::Split;
use kid3_core::ActivityClass;
use proptest::prelude::*;

fn class(i: usize) -> ActivityClass {
    ActivityClass::from_index(i).unwrap()
}

fn video(id: &str, split: Split) -> VideoRow {
    VideoRow { video_id: id.into(), fps: 30.0, duration_s: 60.0, width_px: 1920, height_px: 1080, split }
}

#[test]
fn header_aliases_and_clock_times() {
    let csv = "Filename, Start Time, End Time, Activity Type\nvid_b,0:00:05,0:00:09,Eating\nvid_a, 12 , 20.5 ,\"Phone Call (Left)\"\n";
    let records = parse_annotations(csv.as_bytes()).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!((records[0].video_id.as_str(), records[0].start_s, records[0].end_s), ("vid_a", 12.0, 20.5));
    assert_eq!(records[0].activity, class(4));
    assert_eq!((records[1].start_s, records[1].end_s, records[1].activity), (5.0, 9.0, class(5)));
}

#[test]
fn clock_time_forms() {
    assert_eq!(parse_time("1:02:03"), Some(3723.0));
    assert_eq!(parse_time("02:03.5"), Some(123.5));
    assert_eq!(parse_time(" 7.25 "), Some(7.25));
    assert_eq!(parse_time("abc"), None);
    assert_eq!(parse_time(""), None);
}

#[test]
fn every_bad_row_is_reported_with_its_line() {
    let csv = "video_id,start_s,end_s,label\nv1,0,5,drinking\nv1,x,5,drinking\nv2,3,3,eating\nv3,0,5,\nv4,0,5,moonwalking\n";
    let Err(Error::Annotations(rows)) = parse_annotations(csv.as_bytes()) else { panic!("bad rows accepted") };
    let lines: Vec<u64> = rows.iter().map(|r| r.line).collect();
    assert_eq!(lines, vec![3, 4, 5, 6]);
    assert!(matches!(&rows[3].kind, RowErrorKind::UnknownLabel(l) if l == "moonwalking"));
    assert!(matches!(&rows[0].kind, RowErrorKind::MalformedRow(_)));
    let e = Error::Annotations(rows);
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("line 6: unknown activity label \"moonwalking\""));
}

#[test]
fn missing_columns_and_overlaps_are_errors() {
    assert!(matches!(parse_annotations("video,start\nv,1\n".as_bytes()), Err(Error::Annotations(_))));
    let overlap = "video_id,start_s,end_s,label\nv1,0,10,drinking\nv1,5,12,eating\n";
    assert!(matches!(parse_annotations(overlap.as_bytes()), Err(Error::Annotation(_))));
}

#[test]
fn manifests_follow_the_video_split() {
    let csv = "video_id,start_s,end_s,label\nv1,0,2,drinking\nv2,1,2,eating\nv3,0,1,yawning\n";
    let records = parse_annotations(csv.as_bytes()).unwrap();
    let videos = vec![video("v1", Split::Train), video("v2", Split::Test)];
    let train = build_manifest(Split::Train, &videos, &records, 30).unwrap();
    let test = build_manifest(Split::Test, &videos, &records, 30).unwrap();
    // frames 0 and 30 fall in [0, 2); frame 60 is at t = 2 and excluded
    assert_eq!(train.samples().iter().map(|s| s.frame_id.as_str()).collect::<Vec<_>>(), ["v1_f0000000", "v1_f0000030"]);
    assert_eq!(test.len(), 1);
    assert_eq!(test.samples()[0].class_index, class(5));
    assert_eq!(test.samples()[0].image_ref, "v2/frame_0000030.jpg");
}

#[test]
fn video_table_and_manifest_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let videos = vec![video("v1", Split::Train), VideoRow { fps: 29.97, ..video("v2", Split::Test) }];
    let path = dir.path().join("videos.csv");
    write_videos(&path, &videos).unwrap();
    assert_eq!(read_videos(&path).unwrap(), videos);

    let records = parse_annotations("video_id,start_s,end_s,label\nv1,0,5,texting left\n".as_bytes()).unwrap();
    let manifest = build_manifest(Split::Train, &videos, &records, 30).unwrap();
    let first = dir.path().join("a.jsonl");
    write_manifest(&first, &manifest).unwrap();
    let back = read_manifest(&first, Split::Train, 30).unwrap();
    assert_eq!(back.samples(), manifest.samples());
    let second = dir.path().join("b.jsonl");
    write_manifest(&second, &back).unwrap();
    assert_eq!(std::fs::read(first).unwrap(), std::fs::read(second).unwrap());
}

#[test]
fn non_positive_fps_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("videos.csv");
    std::fs::write(&path, "video_id,fps,duration_s,width_px,height_px,split\nv1,0,10,640,480,train\n").unwrap();
    assert!(matches!(read_videos(&path), Err(Error::Config(_))));
}

proptest! {
    #[test]
    fn case_and_padding_do_not_change_the_class(index in 1usize..=18, upper in any::<bool>(), pad in 0usize..4) {
        let c = class(index);
        let name = if upper { c.display_name().to_uppercase() } else { c.display_name().to_lowercase() };
        let csv = format!("video_id,start_s,end_s,label\nv,0,1,\"{}{name}{}\"\n", " ".repeat(pad), " ".repeat(pad));
        let records = parse_annotations(csv.as_bytes()).unwrap();
        prop_assert_eq!(records[0].activity, c);
    }
}
