export interface Point {
    x: number;
    y: number;
}

/** One correspondence: a click in the contrast pane and one in the RGB pane. */
export interface PointPair {
    source: Point; // contrast-image coordinates
    target: Point; // RGB-image coordinates (normalized 512 frame)
}

export interface TransformDict {
    scale: number;
    rotation_rad: number;
    tx: number;
    ty: number;
}

export interface SetRecord {
    id: string;
    revision: number;
    label: string;
    created_at: string;
    residual_max_px: number;
    residual_mean_px: number;
    checksums: Record<string, string>;
    uploaded_at?: string;
}

export interface TransformResponse {
    transform: TransformDict;
    residuals: number[];
    warped_contrast_png_base64: string;
}

export interface AlignmentFile {
    transform: TransformDict;
    pairs: { source: [number, number]; target: [number, number] }[];
}
