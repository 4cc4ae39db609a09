import { MASK_SIZE, MaskBitmap } from "./maskBitmap.js";
import type { Point } from "./types.js";

export const PANE_SIZE = MASK_SIZE;

export function clearCanvas(ctx: CanvasRenderingContext2D): void {
    ctx.clearRect(0, 0, PANE_SIZE, PANE_SIZE);
}

export function drawImageFit(ctx: CanvasRenderingContext2D, image: CanvasImageSource): void {
    clearCanvas(ctx);
    ctx.drawImage(image, 0, 0, PANE_SIZE, PANE_SIZE);
}

/** The matched pane: warped contrast blended over the RGB image. */
export function drawBlend(
    ctx: CanvasRenderingContext2D,
    rgb: CanvasImageSource | null,
    warpedContrast: CanvasImageSource | null,
    blend: number,
): void {
    clearCanvas(ctx);
    if (rgb !== null) {
        ctx.globalAlpha = 1;
        ctx.drawImage(rgb, 0, 0, PANE_SIZE, PANE_SIZE);
    }
    if (warpedContrast !== null) {
        ctx.globalAlpha = blend;
        ctx.drawImage(warpedContrast, 0, 0, PANE_SIZE, PANE_SIZE);
        ctx.globalAlpha = 1;
    }
}

export function maskToImageData(mask: MaskBitmap): ImageData {
    const image = new ImageData(MASK_SIZE, MASK_SIZE);
    for (let i = 0; i < mask.data.length; i++) {
        const v = mask.data[i];
        image.data[i * 4] = v;
        image.data[i * 4 + 1] = v;
        image.data[i * 4 + 2] = v;
        image.data[i * 4 + 3] = 255;
    }
    return image;
}

/** Red lesion tint over the matched pane wherever the mask is set. */
export function maskToOverlayData(mask: MaskBitmap, alpha = 0.4): ImageData {
    const image = new ImageData(MASK_SIZE, MASK_SIZE);
    for (let i = 0; i < mask.data.length; i++) {
        if (mask.data[i] === 255) {
            image.data[i * 4] = 255;
            image.data[i * 4 + 3] = Math.round(alpha * 255);
        }
    }
    return image;
}

export function drawMarker(
    ctx: CanvasRenderingContext2D,
    point: Point,
    index: number,
    color: string,
): void {
    ctx.strokeStyle = color;
    ctx.fillStyle = color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.arc(point.x, point.y, 6, 0, Math.PI * 2);
    ctx.stroke();
    ctx.font = "11px sans-serif";
    ctx.fillText(String(index + 1), point.x + 8, point.y - 8);
}

export function canvasPoint(canvas: HTMLCanvasElement, event: MouseEvent): Point {
    const rect = canvas.getBoundingClientRect();
    return {
        x: ((event.clientX - rect.left) / rect.width) * PANE_SIZE,
        y: ((event.clientY - rect.top) / rect.height) * PANE_SIZE,
    };
}

export async function imageFromPngBytes(bytes: Uint8Array): Promise<HTMLImageElement> {
    const blob = new Blob([bytes.buffer as ArrayBuffer], { type: "image/png" });
    const url = URL.createObjectURL(blob);
    try {
        const image = new Image();
        await new Promise<void>((resolve, reject) => {
            image.onload = () => resolve();
            image.onerror = () => reject(new Error("failed to decode PNG"));
            image.src = url;
        });
        return image;
    } finally {
        URL.revokeObjectURL(url);
    }
}

export async function imageFromBase64Png(b64: string): Promise<HTMLImageElement> {
    const raw = atob(b64);
    const bytes = new Uint8Array(raw.length);
    for (let i = 0; i < raw.length; i++) bytes[i] = raw.charCodeAt(i);
    return imageFromPngBytes(bytes);
}

/** Read the stored grayscale mask PNG back into mask bytes via a canvas. */
export async function maskBytesFromPng(bytes: Uint8Array): Promise<Uint8Array> {
    const image = await imageFromPngBytes(bytes);
    const canvas = document.createElement("canvas");
    canvas.width = MASK_SIZE;
    canvas.height = MASK_SIZE;
    const ctx = canvas.getContext("2d");
    if (ctx === null) throw new Error("canvas 2d context unavailable");
    ctx.drawImage(image, 0, 0);
    const data = ctx.getImageData(0, 0, MASK_SIZE, MASK_SIZE).data;
    const out = new Uint8Array(MASK_SIZE * MASK_SIZE);
    for (let i = 0; i < out.length; i++) {
        out[i] = data[i * 4] >= 128 ? 255 : 0;
    }
    return out;
}
