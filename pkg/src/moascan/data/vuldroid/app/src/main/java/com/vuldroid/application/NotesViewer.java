package com.vuldroid.application;

import android.os.Bundle;
import android.webkit.WebSettings;
import android.webkit.WebView;

import androidx.appcompat.app.AppCompatActivity;

import java.io.File;
import java.io.FileOutputStream;
import java.io.IOException;

public class NotesViewer extends AppCompatActivity {

    @Override
    protected void onCreate(Bundle savedInstanceState) {
        super.onCreate(savedInstanceState);
        setContentView(R.layout.activity_notes_viewer);

        WebView webView = findViewById(R.id.notesWebView);
        WebSettings settings = webView.getSettings();
        settings.setJavaScriptEnabled(true);
        settings.setAllowFileAccess(true);
        settings.setAllowUniversalAccessFromFileURLs(true);

        String name = getIntent().getStringExtra("note");
        if (name == null) {
            name = "welcome.html";
        }
        // note name is used as given; "../" sequences are not rejected
        File note = new File(getFilesDir(), "notes/" + name);
        webView.loadUrl("file://" + note.getAbsolutePath());
    }

    void saveNote(String name, String html) throws IOException {
        File dir = new File(getExternalFilesDir(null), "notes");
        dir.mkdirs();
        try (FileOutputStream out = new FileOutputStream(new File(dir, name))) {
            out.write(html.getBytes());
        }
    }
}
