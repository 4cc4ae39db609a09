export const MASK_SIZE = 512;

export type PaintMode = "paint" | "erase";

export interface StrokePoint {
    x: number;
    y: number;
}

/**
 * The 512x512 binary lesion mask, row-major bytes of 0 or 255.
 *
 * This buffer is the single source of truth: panes render from it and
 * saves send exactly these bytes, so what the server stores is what the
 * mask pane showed.
 */
export class MaskBitmap {
    readonly data: Uint8Array;

    constructor(data?: Uint8Array) {
        if (data === undefined) {
            this.data = new Uint8Array(MASK_SIZE * MASK_SIZE);
            return;
        }
        if (data.length !== MASK_SIZE * MASK_SIZE) {
            throw new Error(`mask must be ${MASK_SIZE}x${MASK_SIZE}, got ${data.length} bytes`);
        }
        for (let i = 0; i < data.length; i++) {
            if (data[i] !== 0 && data[i] !== 255) {
                throw new Error(`mask values must be 0 or 255, found ${data[i]} at ${i}`);
            }
        }
        this.data = data;
    }

    static fromBytes(bytes: Uint8Array): MaskBitmap {
        return new MaskBitmap(Uint8Array.from(bytes));
    }

    clone(): MaskBitmap {
        return new MaskBitmap(Uint8Array.from(this.data));
    }

    snapshot(): Uint8Array {
        return Uint8Array.from(this.data);
    }

    restore(snapshot: Uint8Array): void {
        this.data.set(snapshot);
    }

    equals(other: MaskBitmap): boolean {
        for (let i = 0; i < this.data.length; i++) {
            if (this.data[i] !== other.data[i]) return false;
        }
        return true;
    }

    count(): number {
        let n = 0;
        for (let i = 0; i < this.data.length; i++) {
            if (this.data[i] === 255) n += 1;
        }
        return n;
    }

    at(x: number, y: number): boolean {
        return this.data[y * MASK_SIZE + x] === 255;
    }

    /** Stamp a hard-edged disc; pixels with (x-cx)^2+(y-cy)^2 <= r^2 flip. */
    paintDisc(cx: number, cy: number, radius: number, mode: PaintMode = "paint"): void {
        const value = mode === "paint" ? 255 : 0;
        const r2 = radius * radius;
        const x0 = Math.max(0, Math.floor(cx - radius));
        const x1 = Math.min(MASK_SIZE - 1, Math.ceil(cx + radius));
        const y0 = Math.max(0, Math.floor(cy - radius));
        const y1 = Math.min(MASK_SIZE - 1, Math.ceil(cy + radius));
        for (let y = y0; y <= y1; y++) {
            const dy = y - cy;
            for (let x = x0; x <= x1; x++) {
                const dx = x - cx;
                if (dx * dx + dy * dy <= r2) {
                    this.data[y * MASK_SIZE + x] = value;
                }
            }
        }
    }

    /**
     * Rasterize a polyline stroke as discs stamped at sub-pixel spacing.
     * A zero-length stroke paints a single disc.
     */
    paintStroke(points: StrokePoint[], radius: number, mode: PaintMode = "paint"): void {
        if (points.length === 0) return;
        this.paintDisc(points[0].x, points[0].y, radius, mode);
        for (let i = 1; i < points.length; i++) {
            const a = points[i - 1];
            const b = points[i];
            const length = Math.hypot(b.x - a.x, b.y - a.y);
            const steps = Math.max(1, Math.ceil(length));
            for (let s = 1; s <= steps; s++) {
                const t = s / steps;
                this.paintDisc(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), radius, mode);
            }
        }
    }
}
