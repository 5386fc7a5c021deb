use dlacs::bench::bench_masks;
use dlacs::container::{Container, FIXED_HEADER_LEN, FLAG_EC};
use dlacs::metrics::{evaluate_frames, evaluate_rgb};
use dlacs::pipeline::{
    compress_frame, compress_image, decompress, to_rgb, train_mask_set, CompressOptions, Decoded,
    TrainParams,
};
use dlacs::synth::{noise_frame, smooth_bayer, smooth_rgb};
use dlacs::trainer::TrainConfig;
use dlacs::{BayerFrame, Error, MaskSet};

const RAW: CompressOptions = CompressOptions {
    entropy_code: false,
    include_decode: false,
};

fn quick_masks(seed: u64) -> MaskSet {
    let frames: Vec<BayerFrame> = (0..2).map(|s| smooth_bayer(256, 256, seed + s)).collect();
    let params = TrainParams {
        count: 4,
        config: TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        },
        ..TrainParams::default()
    };
    train_mask_set(&frames, &params).unwrap().0
}

#[test]
fn full_rank_round_trip_above_40_db() {
    let frames: Vec<BayerFrame> = (0..8).map(|s| smooth_bayer(256, 256, s)).collect();
    let params = TrainParams {
        kx: 2,
        ky: 2,
        n_c: 4,
        bits: 8,
        count: 4,
        ..TrainParams::default()
    };
    let (masks, _) = train_mask_set(&frames, &params).unwrap();
    let psnrs: Vec<f64> = (0..5)
        .map(|s| {
            let frame = smooth_bayer(256, 256, 99 + s);
            let c = compress_frame(&frame, &masks, CompressOptions::default()).unwrap();
            let Decoded::Frame(out) = decompress(&c, None).unwrap() else {
                panic!("Bayer container decoded to RGB")
            };
            assert_eq!((out.width, out.height), (256, 256));
            evaluate_frames(&frame, &out).unwrap().psnr
        })
        .collect();
    let mean = psnrs.iter().sum::<f64>() / psnrs.len() as f64;
    eprintln!("full-rank 2x2 PSNR per frame {psnrs:.2?}, mean {mean:.2}");
    assert!(mean > 40.0, "mean PSNR {mean}");
}

#[test]
fn full_hd_class_frame_payload_is_closed_form() {
    let masks = MaskSet::from_integer(bench_masks(8, 4, 3), 4, 1.0).unwrap();
    let frame = noise_frame(2048, 3840, 1);
    let c = compress_frame(&frame, &masks, RAW).unwrap();
    assert_eq!(c.payload.len(), 256 * 480 * 4);
    let bytes = c.to_bytes();
    // Fixed header, W_int, payload length, payload.
    assert_eq!(
        bytes.len(),
        FIXED_HEADER_LEN + 8 * 8 * 4 + 8 + 256 * 480 * 4
    );
}

#[test]
fn non_divisible_frame_suggests_crop() {
    let masks = MaskSet::from_integer(bench_masks(8, 4, 3), 4, 1.0).unwrap();
    let err = compress_frame(&noise_frame(2048, 3866, 1), &masks, RAW).unwrap_err();
    assert!(matches!(
        err,
        Error::NotDivisible {
            crop_w: 2048,
            crop_h: 3864,
            ..
        }
    ));
    let msg = err.to_string();
    assert!(
        msg.contains("pad or crop required") && msg.contains("2048x3864"),
        "{msg}"
    );
}

#[test]
fn entropy_coding_shrinks_smooth_frames_losslessly() {
    let masks = quick_masks(40);
    let frame = smooth_bayer(512, 256, 41);
    let raw = compress_frame(&frame, &masks, CompressOptions::default()).unwrap();
    let coded = compress_frame(
        &frame,
        &masks,
        CompressOptions {
            entropy_code: true,
            include_decode: true,
        },
    )
    .unwrap();
    let bytes = coded.to_bytes();
    assert_eq!(bytes[7] & FLAG_EC, FLAG_EC);
    assert!(coded.payload.len() < raw.payload.len());
    let back = Container::from_bytes(&bytes).unwrap();
    assert_eq!(back.planes().unwrap(), raw.planes().unwrap());
    assert_eq!(
        decompress(&back, None).unwrap(),
        decompress(&raw, None).unwrap()
    );
}

#[test]
fn rgb_round_trip_keeps_dims_and_quality() {
    let masks = quick_masks(60);
    let img = smooth_rgb(96, 64, 61);
    for ec in [false, true] {
        let opts = CompressOptions {
            entropy_code: ec,
            include_decode: true,
        };
        let c =
            Container::from_bytes(&compress_image(&img, &masks, opts).unwrap().to_bytes()).unwrap();
        assert!(c.rgb);
        assert_eq!(c.plane_count(), 3);
        let out = to_rgb(decompress(&c, None).unwrap()).unwrap();
        assert_eq!((out.width, out.height), (96, 64));
        assert!(evaluate_rgb(&img, &out).unwrap().psnr > 20.0);
    }
}

#[test]
fn demosaiced_output_has_frame_dims() {
    let masks = quick_masks(70);
    let frame = smooth_bayer(64, 32, 71);
    let c = compress_frame(&frame, &masks, CompressOptions::default()).unwrap();
    let rgb = to_rgb(decompress(&c, None).unwrap()).unwrap();
    assert_eq!((rgb.width, rgb.height), (64, 32));
}

#[test]
fn stripped_container_decodes_with_mask_file() {
    let masks = quick_masks(80);
    let frame = smooth_bayer(64, 64, 81);
    let stripped =
        Container::from_bytes(&compress_frame(&frame, &masks, RAW).unwrap().to_bytes()).unwrap();
    assert!(matches!(
        decompress(&stripped, None),
        Err(Error::DecodeKernelUnavailable)
    ));
    let full = compress_frame(&frame, &masks, CompressOptions::default()).unwrap();
    assert_eq!(
        decompress(&stripped, Some(&masks)).unwrap(),
        decompress(&full, None).unwrap()
    );
}
