// Client-side document text extraction.
//
// The server only accepts extracted text (text/plain or text/markdown);
// binary decoding never crosses the wire. PDFs are converted in the browser
// via pdfjs, loaded lazily so the common .txt path stays dependency-free.
// The extractor is injectable for tests.

export type PdfExtractor = (file: File) => Promise<string>;

export async function extractTextFromPdf(file: File): Promise<string> {
  const pdfjs = await import("pdfjs-dist");
  const data = new Uint8Array(await file.arrayBuffer());
  const doc = await pdfjs.getDocument({ data }).promise;
  const pages: string[] = [];
  for (let i = 1; i <= doc.numPages; i++) {
    const page = await doc.getPage(i);
    const content = await page.getTextContent();
    const text = content.items
      .map((item) => ("str" in item ? item.str : ""))
      .join(" ");
    pages.push(text);
  }
  return pages.join("\n\n");
}

export async function fileToText(
  file: File,
  pdfExtractor: PdfExtractor = extractTextFromPdf,
): Promise<string> {
  if (file.type === "application/pdf" || file.name.toLowerCase().endsWith(".pdf")) {
    return pdfExtractor(file);
  }
  if (typeof file.text === "function") {
    return file.text();
  }
  // Older DOM implementations only expose FileReader.
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve(String(reader.result ?? ""));
    reader.onerror = () => reject(reader.error);
    reader.readAsText(file);
  });
}
